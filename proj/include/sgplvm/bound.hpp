#pragma once

// Evidence lower bounds. The training bound is the collapsed bound with the
// optimal q(U) substituted; every m x m quantity is handled through the
// factors (latent, spatial) of K_uu and C = L^{-1} Psi2 L^{-T}, so cost is
// linear in n = n_xi * n_s.
//
// Matrices over the inducing grid are stored as m x d_y with column j the
// row-major flattening of an m_xi x m_s block (spatial index fastest).

#include "sgplvm/kernels.hpp"
#include "sgplvm/kron.hpp"
#include "sgplvm/latent.hpp"
#include "sgplvm/psi.hpp"

namespace sgplvm {

// Jittered K_uu factors, K_uu = k_xi (x) k_s.
struct KuuFactors {
  Matrix k_xi;
  Matrix k_s;
};

struct BoundWorkspace {
  Index n_xi = 0, n_s = 0, m_xi = 0, m_s = 0, d_y = 0;
  double beta = 1.0;
  Matrix l_xi, l_s;          // Cholesky factors of the K_uu factors
  Matrix c_xi, c_s;          // whitened Psi2 factors
  KronEig<double> eig;       // of C = c_xi (x) c_s
  Matrix r_xi, r_s;          // L^{-T} Q_C per factor
  DiagPlusConst<double> d;   // beta^{-1} + lambda products (Kronecker order)
  Matrix b;                  // Q_C^T L^{-1} Psi1^T Y, m x d_y

  Index m() const { return m_xi * m_s; }
  Index n() const { return n_xi * n_s; }
  // D as an m_xi x m_s grid.
  Matrix d_grid() const;
};

BoundWorkspace build_workspace(const StructuredPsiSet &psi, const KuuFactors &kuu,
                               const Matrix &y, double beta);

double collapsed_bound(const BoundWorkspace &ws, double psi0_full,
                       const Matrix &y, double kl);

// Gradient of the collapsed bound (excluding the KL term) with respect to
// each factor it is assembled from.
struct BoundGradient {
  Matrix psi1_xi;
  Matrix psi2_xi;
  double psi0_xi = 0.0;
  Matrix k_fu_s;
  double spatial_trace = 0.0;
  Matrix k_xi;
  Matrix k_s;
  double beta = 0.0;
};

BoundGradient collapsed_bound_gradient(const BoundWorkspace &ws,
                                       const StructuredPsiSet &psi,
                                       const KuuFactors &kuu, const Matrix &y);

// KL(q || prior) with its gradient w.r.t. mu and log_var (and the temporal
// kernel for dynamical posteriors).
struct KlResult {
  double value = 0.0;
  LatentGradient grad;
};

double kl_iid(const VariationalLatent &q);
KlResult kl_iid_with_grad(const VariationalLatent &q);

double kl_dynamical(const VariationalLatent &q, const KernelSpec<double> &temporal,
                    double jitter = 1e-8);
// Same value for an explicit (possibly zero) Lambda; mu and lambda are n x d.
double kl_dynamical(const Matrix &mu, const Matrix &lambda, const Matrix &k_xx);
KlResult kl_dynamical_with_grad(const VariationalLatent &q,
                                const KernelSpec<double> &temporal, double jitter);

// Axis-aligned Gaussian, used for test-time latent posteriors and priors.
struct DiagonalGaussian {
  Vector mean;
  Vector var;
};

double kl_diagonal(const DiagonalGaussian &q, const DiagonalGaussian &p);

// q*(U) = prod_j N(u_j | ubar_j, Sigma_u) with
//   Ubar = K_uu K_psi^{-1} Psi1^T Y = L Q_C D^{-1} B,
//   Sigma_u = beta^{-1} K_uu K_psi^{-1} K_uu,
// held in factored form. `v` caches K_uu^{-1} Ubar = L^{-T} Q_C D^{-1} B.
struct OptimalInducingPosterior {
  Matrix mean;               // m x d_y
  Matrix v;                  // m x d_y
  Matrix l_xi, l_s;
  Matrix r_xi, r_s;
  KronEig<double> eig;
  DiagPlusConst<double> d;
  Matrix k_xi_inv, k_s_inv;
  double beta = 1.0;
  Index m_xi = 0, m_s = 0, d_y = 0;

  Matrix d_grid() const;
  // Dense Sigma_u; only for small problems and tests.
  Matrix dense_covariance() const;
  // Block j of v / mean as an m_xi x m_s matrix.
  Matrix v_block(Index j) const;
  Matrix mean_block(Index j) const;
};

OptimalInducingPosterior optimal_q_u(const BoundWorkspace &ws);

// Terms of the test-data part L* of the augmented bound for one partially
// observed example, with the trained model frozen. Given the test latent
// statistics p = Psi1_xi* (1 x m_xi), P2 = Psi2_xi* and psi0_xi*:
//   L* = constant + psi0_coeff psi0_xi* + <cross, p> + <quad, P2> - KL.
struct TestBoundTerms {
  double constant = 0.0;
  double psi0_coeff = 0.0;
  Vector cross;
  Matrix quad;
  Index n_obs = 0;
};

// k_su_s: spatial cross-covariance between the observed test inputs and the
// spatial inducing inputs (n_obs x m_s); spatial_trace: tr(K_**^s).
TestBoundTerms test_bound_terms(const OptimalInducingPosterior &qu,
                                const Matrix &k_su_s, const Matrix &y_star,
                                double spatial_trace);

struct TestBoundValue {
  double value = 0.0;
  Vector g_mean;  // d_xi
  Vector g_log_var;
};

TestBoundValue test_bound(const TestBoundTerms &terms, const DiagonalGaussian &q_star,
                          const Matrix &z_xi, const KernelSpec<double> &latent_spec,
                          const DiagonalGaussian &prior, bool with_grad = false);

}  // namespace sgplvm
