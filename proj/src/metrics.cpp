#include "sgplvm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgplvm {

CaseMetrics case_metrics(const Matrix &truth, const Matrix &mean, const Matrix &var) {
  if (truth.rows() != mean.rows() || truth.cols() != mean.cols() || var.rows() != mean.rows() ||
      var.cols() != mean.cols()) {
    throw ShapeError("metrics need truth, mean and variance of the same shape");
  }
  CaseMetrics c;
  c.count = truth.size();
  if (c.count == 0) return c;
  if ((var.array() <= 0.0).any()) throw InputError("predictive variances must be positive");
  c.rmse = std::sqrt((truth - mean).squaredNorm() / static_cast<double>(c.count));
  std::vector<double> nlp(static_cast<std::size_t>(c.count));
  for (Index i = 0; i < c.count; ++i) {
    const double r = truth.data()[i] - mean.data()[i];
    const double v = var.data()[i];
    nlp[static_cast<std::size_t>(i)] = 0.5 * (std::log(2.0 * M_PI * v) + r * r / v);
  }
  c.mnlp = median(std::move(nlp));
  return c;
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("percentile of an empty set");
  if (!(p > 0.0 && p <= 100.0)) throw InputError("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty set");
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MetricsReport summarize(std::vector<CaseMetrics> cases) {
  MetricsReport r;
  r.cases = std::move(cases);
  std::vector<double> rmse, mnlp;
  for (const auto &c : r.cases) {
    if (c.count == 0) continue;
    rmse.push_back(c.rmse);
    mnlp.push_back(c.mnlp);
  }
  if (rmse.empty()) return r;
  auto fill = [](const std::vector<double> &v) {
    MetricsSummary s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.p5 = percentile_nearest_rank(v, 5.0);
    s.p95 = percentile_nearest_rank(v, 95.0);
    return s;
  };
  r.rmse = fill(rmse);
  r.mnlp = fill(mnlp);
  return r;
}

}  // namespace sgplvm
