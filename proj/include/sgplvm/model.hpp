#pragma once

// SGPLVM parameter container and training.
//
// Data layout: Y is n x d_y with n = n_xi * n_s and row r = i_xi * n_s + i_s.
// The spatial inputs X_s are the Cartesian product of the per-axis
// coordinates in `spatial_factors` (last axis fastest) and are handled by a
// single spatial kernel over d_s dimensions.

#include <cstdint>
#include <string>
#include <vector>

#include "sgplvm/bound.hpp"
#include "sgplvm/kernels.hpp"
#include "sgplvm/latent.hpp"
#include "sgplvm/optim.hpp"

namespace sgplvm {

// Cartesian product of per-axis coordinate columns, last axis fastest.
Matrix cartesian_product(const std::vector<Matrix> &factors);

struct ObservationGrid {
  Matrix y;
  std::vector<Matrix> spatial_factors;  // each k x 1 (or k x d_k)
  Vector timestamps;                    // empty unless dynamical
  Index n_xi = 0;

  Index n_s() const;
  Index d_y() const { return y.cols(); }
  Matrix spatial_inputs() const { return cartesian_product(spatial_factors); }
  void validate() const;
};

// Per-channel affine standardization fitted on training data.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix &y);
  static Standardizer identity(Index d_y);
  Matrix apply(const Matrix &y) const;
  Matrix invert(const Matrix &y) const;
  // Maps standardized variances back to raw units.
  Matrix invert_variance(const Matrix &v) const;
};

enum class OptimizerKind { Adam, Lbfgs };
enum class InitKind { Pca, Random };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string &s);
std::string to_string(InitKind k);
InitKind init_from_string(const std::string &s);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Lbfgs;
  int max_iters = 500;
  double learning_rate = 0.01;
  int lbfgs_memory = 10;
  InitKind init = InitKind::Pca;
  int fixed_beta_iters = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-7;

  LatentMode latent_mode = LatentMode::Iid;
  Index latent_dim = 2;
  Index m_xi = 10;
  Index m_s = 0;  // 0 means m_s = n_s
  KernelFamily spatial_family = KernelFamily::Matern32;
  KernelFamily temporal_family = KernelFamily::ArdRbf;
  bool spatial_shared_lengthscale = false;
  bool optimize_z_s = false;
  double init_beta = 100.0;
  double init_latent_var = 0.1;
  double jitter = 1e-6;  // relative to the kernel variance
  double spatial_lengthscale = 0.0;  // 0 means per-dimension std of X_s
  double temporal_lengthscale = 0.0;  // 0 means a tenth of the time span

  void validate() const;
};

struct SgplvmModel {
  KernelSpec<double> latent_kernel;
  KernelSpec<double> spatial_kernel;
  KernelSpec<double> temporal_kernel;
  bool has_temporal = false;
  double beta = 100.0;
  Matrix z_xi;
  Matrix z_s;
  bool z_s_tied = false;  // Z_s is X_s itself
  bool optimize_z_s = false;
  VariationalLatent q;
  double jitter = 1e-6;
  double temporal_jitter = 1e-6;
  Standardizer standardizer;
  Matrix x_s;  // training spatial inputs
  Matrix y;    // standardized training data
  Index n_xi = 0;
  bool trained = false;
  int iterations_done = 0;

  Index latent_dim() const { return q.dim(); }
  Index m_xi() const { return z_xi.rows(); }
  Index m_s() const { return z_s.rows(); }
  Index n_s() const { return x_s.rows(); }
  Index d_y() const { return y.cols(); }
  const KernelSpec<double> *temporal() const {
    return has_temporal ? &temporal_kernel : nullptr;
  }
};

// Builds a model on standardized data.
SgplvmModel initialize(const ObservationGrid &data, const TrainConfig &cfg);

// Jittered K_uu factors for the model's current inducing inputs.
KuuFactors model_kuu(const SgplvmModel &model);

// Flat parameter vector: [mu, log_var, latent log-hyper, spatial log-hyper,
// temporal log-hyper (dynamical only), log beta, Z_xi, Z_s (if optimized)].
Vector pack(const SgplvmModel &model);
void unpack(SgplvmModel &model, const Vector &theta);

struct ParamLayout {
  Index mu = 0, log_var = 0, latent_hyper = 0, spatial_hyper = 0, temporal_hyper = 0,
        log_beta = 0, z_xi = 0, z_s = 0, size = 0;
};
ParamLayout param_layout(const SgplvmModel &model);

// Collapsed bound at the model's parameters; fills the gradient in pack()
// order when `grad` is non-null.
double evaluate_bound(const SgplvmModel &model, Vector *grad = nullptr);

struct TraceRow {
  int iter = 0;
  double bound = 0.0;
  double beta = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  SgplvmModel model;
  std::vector<TraceRow> trace;
  double initial_bound = 0.0;
  double final_bound = 0.0;
  std::string status;
};

TrainResult train(const SgplvmModel &model, const TrainConfig &cfg);

}  // namespace sgplvm
