#pragma once

// Test-time inference of the latent point behind a partially observed
// example, with every trained quantity held fixed, and imputation of the
// unobserved outputs. All values are in standardized output units.

#include <cstdint>
#include <limits>
#include <vector>

#include "sgplvm/predict.hpp"

namespace sgplvm {

struct TestCase {
  Matrix y_star;                   // n_obs x d_y, observed values only
  Matrix xs_star;                  // n_obs x d_s, their spatial inputs
  std::vector<Index> observed_idx; // positions of the observed rows in the full grid
  double t_star = std::numeric_limits<double>::quiet_NaN();

  bool has_time() const { return t_star == t_star; }
  void validate(Index d_y, Index d_s) const;
};

struct InferConfig {
  int restarts = 5;  // one from the best training latent, the rest random
  int max_iters = 200;
  double tolerance = 1e-6;
  OptimizerKind optimizer = OptimizerKind::Lbfgs;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
};

struct InferResult {
  DiagonalGaussian q;
  DiagonalGaussian prior;
  double bound = 0.0;
  int best_restart = 0;
  std::vector<double> init_bounds;
  std::vector<double> final_bounds;
};

// Prior over the test latent point: N(0, I) for iid models; for dynamical
// models the latent posterior at t_star, or the temporal prior without one.
DiagonalGaussian test_latent_prior(const PosteriorContext &ctx, const TestCase &tc);

// The test bound and its gradient with respect to (mean, log variance).
TestBoundValue evaluate_test_bound(const PosteriorContext &ctx, const TestBoundTerms &terms,
                                   const DiagonalGaussian &prior, const DiagonalGaussian &q,
                                   bool with_grad);

TestBoundTerms make_test_terms(const PosteriorContext &ctx, const TestCase &tc);

InferResult infer_latent(const PosteriorContext &ctx, const TestCase &tc, const InferConfig &cfg);

struct ImputeOptions {
  int n_mog = 100;
  std::uint64_t seed = 0;
  bool observation_noise = true;  // add beta^{-1} to the observed block when conditioning
  InferConfig infer;
};

struct ImputeResult {
  InferResult latent;
  std::vector<Index> missing_idx;
  Matrix mean;  // n_missing x d_y
  Matrix var;   // n_missing x d_y, latent function variance (no observation noise)
};

// x_s_full: every spatial input of the example (the observed ones included).
ImputeResult impute(const PosteriorContext &ctx, const TestCase &tc, const Matrix &x_s_full,
                    const ImputeOptions &opt);

}  // namespace sgplvm
