#pragma once

// Forward predictions from a trained model. Outputs over a set of test
// latent points X_xi* (n_xi* x d) and spatial points X_s* (n_s* x d_s) are
// stored in the same (latent x spatial) row order as the training data.
// Everything is in standardized output units.

#include <cstdint>
#include <vector>

#include "sgplvm/bound.hpp"
#include "sgplvm/model.hpp"

namespace sgplvm {

// Quantities of the trained posterior shared by all predictions.
struct PosteriorContext {
  SgplvmModel model;
  OptimalInducingPosterior qu;
};

PosteriorContext make_context(const SgplvmModel &model);

struct PredictiveGaussian {
  Matrix mean;  // n* x d_y
  Vector var;   // n*, shared by all output channels
  Matrix cov;   // n* x n*, empty unless requested
};

PredictiveGaussian predict_at(const PosteriorContext &ctx, const Matrix &x_xi_star,
                              const Matrix &x_s_star, bool want_full_cov = false);

// Mean of the prediction averaged over Gaussian latent marginals (one row per
// test latent point).
Matrix predict_marginal_mean(const PosteriorContext &ctx, const LatentMarginals &q_star,
                             const Matrix &x_s_star);

struct MixturePrediction {
  std::vector<PredictiveGaussian> components;

  Index size() const { return static_cast<Index>(components.size()); }
  Matrix mean() const;
  // Per-point, per-channel mixture variance.
  Matrix variance() const;
};

// Equal-weight mixture from n_mog samples of a single-point q_star.
MixturePrediction predict_mixture(const PosteriorContext &ctx, const DiagonalGaussian &q_star,
                                  const Matrix &x_s_star, int n_mog, std::uint64_t seed,
                                  bool want_full_cov = false);

// Gaussian conditioning of the prediction on the points in `observed_idx`.
// `noise` is added to the observed block's diagonal. The result covers the
// remaining points in increasing index order.
PredictiveGaussian condition_on_observed(const PredictiveGaussian &pred,
                                         const std::vector<Index> &observed_idx,
                                         const Matrix &observed_values, double noise = 0.0);

// Latent posterior marginals of a dynamical model at new times.
LatentMarginals dynamical_latent_at(const SgplvmModel &model, const Vector &t_star);

}  // namespace sgplvm
