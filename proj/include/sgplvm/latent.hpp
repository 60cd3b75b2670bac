#pragma once

// Variational posteriors over the per-example latent variables and their
// per-point Gaussian marginals.

#include <string>

#include "sgplvm/kernels.hpp"
#include "sgplvm/kron.hpp"

namespace sgplvm {

enum class LatentMode { Iid, Dynamical };

std::string to_string(LatentMode mode);
LatentMode latent_mode_from_string(const std::string &name);

// iid:       q(x_ij) = N(mu_ij, exp(log_var_ij))
// dynamical: q(x_:j) = N(K_xx mu_:j, (K_xx^{-1} + diag(exp(log_var_:j)))^{-1}),
//            log_var holding log Lambda; timestamps required.
struct VariationalLatent {
  LatentMode mode = LatentMode::Iid;
  Matrix mu;
  Matrix log_var;
  Vector timestamps;

  Index size() const { return mu.rows(); }
  Index dim() const { return mu.cols(); }
  void validate() const;
};

// Per-point diagonal Gaussian marginals.
struct LatentMarginals {
  Matrix mean;
  Matrix var;
};

struct LatentGradient {
  Matrix mu;
  Matrix log_var;
  Vector temporal_log_hyper;  // empty for iid
};

// K_xx on the timestamps with jitter * variance added to the diagonal.
Matrix temporal_covariance(const Vector &t, const KernelSpec<double> &temporal,
                           double jitter);

LatentMarginals latent_marginals(const VariationalLatent &q,
                                 const KernelSpec<double> *temporal,
                                 double jitter);

// Pulls gradients on the marginal means/variances back to the free
// parameters of q (and the temporal kernel for dynamical posteriors).
LatentGradient latent_marginals_backward(const VariationalLatent &q,
                                         const KernelSpec<double> *temporal,
                                         double jitter, const Matrix &g_mean,
                                         const Matrix &g_var);

// Gradient of sum_ij G_ij K_xx[i, j] w.r.t. log temporal hyperparameters,
// including the jitter term.
Vector temporal_hyper_contract(const Vector &t, const KernelSpec<double> &temporal,
                               double jitter, const Matrix &g);

}  // namespace sgplvm
