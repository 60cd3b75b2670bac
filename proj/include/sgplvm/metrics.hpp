#pragma once

#include <vector>

#include "sgplvm/kron.hpp"

namespace sgplvm {

struct CaseMetrics {
  double rmse = 0.0;
  double mnlp = 0.0;  // median of -log N(y | mean, var) over the evaluated values
  Index count = 0;
};

// All arguments share one shape; `var` is the full predictive variance of
// each value (observation noise included by the caller).
CaseMetrics case_metrics(const Matrix &truth, const Matrix &mean, const Matrix &var);

// Nearest-rank percentile, p in (0, 100].
double percentile_nearest_rank(std::vector<double> values, double p);
double median(std::vector<double> values);

struct MetricsSummary {
  double mean = 0.0, p5 = 0.0, p95 = 0.0;
};

struct MetricsReport {
  std::vector<CaseMetrics> cases;
  MetricsSummary rmse, mnlp;
};

MetricsReport summarize(std::vector<CaseMetrics> cases);

}  // namespace sgplvm
