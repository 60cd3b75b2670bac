#pragma once

// End-to-end steps shared by the command-line tool and the acceptance runs.
// Inputs and outputs here are in raw data units.

#include "sgplvm/infer.hpp"
#include "sgplvm/metrics.hpp"

namespace sgplvm {

// Fits the standardizer on `raw`, builds the model and trains it.
TrainResult train_on_grid(const ObservationGrid &raw, const TrainConfig &cfg);

// Test example i with the pixels where mask(i, s) != 0 observed.
TestCase make_test_case(const SgplvmModel &model, const ObservationGrid &raw, const Matrix &mask,
                        Index i);

struct ImputeSetOptions {
  ImputeOptions impute;
  bool raw_mnlp = false;  // MNLP in raw units instead of standardized ones
  int threads = 1;
};

struct ImputeSetResult {
  Matrix y;    // observed values kept, missing ones imputed
  Matrix var;  // predictive variance of imputed values (noise excluded), 0 where observed
  std::vector<InferResult> latents;
  MetricsReport metrics;  // over the missing pixels, against the values in the test grid
};

ImputeSetResult impute_test_set(const PosteriorContext &ctx, const ObservationGrid &raw,
                                const Matrix &mask, const ImputeSetOptions &opt);

// Metrics of a prediction over the entries where `evaluate` is non-zero.
// `var` excludes observation noise; `noise_var` is added before scoring.
CaseMetrics masked_metrics(const Matrix &truth, const Matrix &mean, const Matrix &var,
                           const std::vector<Index> &rows, double noise_var);

}  // namespace sgplvm
