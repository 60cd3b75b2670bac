#pragma once

// Expectations of the ARD-RBF latent kernel under per-point Gaussian
// marginals (the psi statistics), and their Kronecker combination with the
// spatial factor.
//
// Psi2 is accumulated over data points i = 0, 1, ..., n-1 in that order, so
// results do not depend on how the caller schedules work.

#include "sgplvm/kernels.hpp"
#include "sgplvm/latent.hpp"

namespace sgplvm {

struct PsiSet {
  double psi0 = 0.0;
  Matrix psi1;  // n_xi x m_xi
  Matrix psi2;  // m_xi x m_xi
};

// Factored statistics of the full (latent x spatial) model:
//   psi0 = psi0_xi * tr(K_ff^s), Psi1 = Psi1_xi (x) K_fu^s,
//   Psi2 = Psi2_xi (x) (K_uf^s K_fu^s).
struct StructuredPsiSet {
  PsiSet latent;
  double spatial_trace = 0.0;  // tr(K_ff^s)
  Matrix k_fu_s;               // n_s x m_s
  Matrix k_uf_k_fu_s;          // m_s x m_s

  double psi0_full() const { return latent.psi0 * spatial_trace; }
};

double psi0_rbf(const LatentMarginals &q, const KernelSpec<double> &spec);
Matrix psi1_rbf(const LatentMarginals &q, const Matrix &z,
                const KernelSpec<double> &spec);
Matrix psi2_rbf(const LatentMarginals &q, const Matrix &z,
                const KernelSpec<double> &spec);
PsiSet psi_rbf(const LatentMarginals &q, const Matrix &z,
               const KernelSpec<double> &spec);

// Gradients of  g0 * psi0 + <G1, Psi1> + <G2, Psi2>  (G2 symmetric).
struct PsiGradient {
  Matrix mean;               // n x d
  Matrix var;                // n x d, w.r.t. the variance itself
  Vector log_hyper;          // [log variance, log lengthscales...]
  Matrix z;                  // m x d
};

PsiGradient psi_rbf_backward(const LatentMarginals &q, const Matrix &z,
                             const KernelSpec<double> &spec, double g_psi0,
                             const Matrix &g_psi1, const Matrix &g_psi2);

// `z_s_tied` means the spatial inducing inputs are the data inputs
// themselves, so K_fu^s is the self-covariance of x_s.
StructuredPsiSet structured_psi(const LatentMarginals &q, const Matrix &z_xi,
                                const Matrix &z_s, const Matrix &x_s,
                                const KernelSpec<double> &latent_spec,
                                const KernelSpec<double> &spatial_spec,
                                bool z_s_tied = false);

}  // namespace sgplvm
