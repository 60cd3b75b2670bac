#include "sgplvm/bound.hpp"

#include <cmath>
#include <numbers>

namespace sgplvm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

using RowMap = Eigen::Map<RowMat<double>>;
using ConstRowMap = Eigen::Map<const RowMat<double>>;

ConstRowMap block_of(const Matrix &a, Index j, Index rows, Index cols) {
  return ConstRowMap(a.col(j).data(), rows, cols);
}

Matrix cholesky_of(const Matrix &k, const std::string &name) {
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    throw DecompositionError("cholesky of " + name + " failed");
  }
  return llt.matrixL();
}

// L^{-1} S L^{-T} for symmetric S.
Matrix whiten(const Matrix &l, const Matrix &s) {
  const Matrix tmp = l.triangularView<Eigen::Lower>().solve(s);
  Matrix c = l.triangularView<Eigen::Lower>().solve(tmp.transpose());
  return 0.5 * (c + c.transpose());
}

Matrix chol_inverse(const Matrix &l) {
  const Index n = l.rows();
  const Matrix linv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  return linv.transpose() * linv;
}

void require_finite(double v, const char *term) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite value in bound term '") + term + "'");
  }
}

}  // namespace

Matrix BoundWorkspace::d_grid() const {
  return ConstRowMap(d.values().data(), m_xi, m_s);
}

BoundWorkspace build_workspace(const StructuredPsiSet &psi, const KuuFactors &kuu,
                               const Matrix &y, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InputError("noise precision beta must be positive and finite");
  }
  BoundWorkspace ws;
  ws.n_xi = psi.latent.psi1.rows();
  ws.m_xi = psi.latent.psi1.cols();
  ws.n_s = psi.k_fu_s.rows();
  ws.m_s = psi.k_fu_s.cols();
  ws.d_y = y.cols();
  ws.beta = beta;
  if (psi.latent.psi2.rows() != ws.m_xi || kuu.k_xi.rows() != ws.m_xi ||
      kuu.k_s.rows() != ws.m_s || psi.k_uf_k_fu_s.rows() != ws.m_s) {
    throw ShapeError("inconsistent inducing-point counts across factors");
  }
  if (y.rows() != ws.n_xi * ws.n_s) {
    throw ShapeError("Y has " + std::to_string(y.rows()) + " rows, expected n_xi*n_s = " +
                     std::to_string(ws.n_xi * ws.n_s));
  }

  ws.l_xi = cholesky_of(kuu.k_xi, "latent K_uu factor");
  ws.l_s = cholesky_of(kuu.k_s, "spatial K_uu factor");
  ws.c_xi = whiten(ws.l_xi, psi.latent.psi2);
  ws.c_s = whiten(ws.l_s, psi.k_uf_k_fu_s);
  ws.eig = factored_eig_sym(KronMatrix<double>{ws.c_xi, ws.c_s});
  ws.r_xi = ws.l_xi.transpose().triangularView<Eigen::Upper>().solve(ws.eig.q_factors[0]);
  ws.r_s = ws.l_s.transpose().triangularView<Eigen::Upper>().solve(ws.eig.q_factors[1]);
  ws.d = DiagPlusConst<double>(ws.eig.eigenvalues(), 1.0 / beta);

  // Q_C^T L^{-1} Psi1^T first, Y last.
  const Matrix left = ws.r_xi.transpose() * psi.latent.psi1.transpose();  // m_xi x n_xi
  const Matrix right = ws.r_s.transpose() * psi.k_fu_s.transpose();       // m_s x n_s
  ws.b.resize(ws.m(), ws.d_y);
  for (Index j = 0; j < ws.d_y; ++j) {
    const auto yj = block_of(y, j, ws.n_xi, ws.n_s);
    RowMap(ws.b.col(j).data(), ws.m_xi, ws.m_s) = (left * yj) * right.transpose();
  }
  return ws;
}

double collapsed_bound(const BoundWorkspace &ws, double psi0_full, const Matrix &y,
                       double kl) {
  if (y.rows() != ws.n() || y.cols() != ws.d_y) {
    throw ShapeError("Y does not match the bound workspace");
  }
  const double n = static_cast<double>(ws.n());
  const double m = static_cast<double>(ws.m());
  const double dy = static_cast<double>(ws.d_y);
  const double beta = ws.beta;
  const Vector dinv = ws.d.inverse();

  const double log_det_a = ws.d.log_det();
  const double trace_c = ws.eig.lambda_factors[0].sum() * ws.eig.lambda_factors[1].sum();
  const double fit = (ws.b.array().square().colwise() * dinv.array()).sum();
  const double yy = y.squaredNorm();
  require_finite(log_det_a, "log det A");
  require_finite(fit, "tr(D^-1 B B^T)");
  require_finite(yy, "tr(Y Y^T)");
  require_finite(psi0_full, "psi0");
  require_finite(kl, "KL");

  const double value = 0.5 * dy * ((n - m) * std::log(beta) - n * kLog2Pi - log_det_a) -
                       0.5 * beta * (yy - fit) - 0.5 * beta * dy * (psi0_full - trace_c) - kl;
  require_finite(value, "bound");
  return value;
}

BoundGradient collapsed_bound_gradient(const BoundWorkspace &ws,
                                       const StructuredPsiSet &psi,
                                       const KuuFactors &kuu, const Matrix &y) {
  const Index mx = ws.m_xi, ms = ws.m_s, nx = ws.n_xi, ns = ws.n_s;
  const double dy = static_cast<double>(ws.d_y);
  const double beta = ws.beta;
  const double n = static_cast<double>(ws.n());
  const double m = static_cast<double>(ws.m());

  const Matrix dinv = ws.d_grid().cwiseInverse();  // m_xi x m_s
  const Vector &lam_x = ws.eig.lambda_factors[0];
  const Vector &lam_s = ws.eig.lambda_factors[1];
  const double tr_cx = lam_x.sum();
  const double tr_cs = lam_s.sum();
  const Matrix kx_inv = chol_inverse(ws.l_xi);
  const Matrix ks_inv = chol_inverse(ws.l_s);
  const Matrix &p = psi.latent.psi1;
  const Matrix &p2 = psi.latent.psi2;
  const Matrix &fs = psi.k_fu_s;
  const Matrix &gs = psi.k_uf_k_fu_s;

  BoundGradient g;
  g.psi1_xi = Matrix::Zero(nx, mx);
  g.k_fu_s = Matrix::Zero(ns, ms);
  Matrix vgv_x = Matrix::Zero(mx, mx), vkv_x = Matrix::Zero(mx, mx);
  Matrix vpv_s = Matrix::Zero(ms, ms), vkv_s = Matrix::Zero(ms, ms);
  double fit = 0.0, fit2 = 0.0;
  for (Index j = 0; j < ws.d_y; ++j) {
    const auto bj = block_of(ws.b, j, mx, ms);
    const Matrix scaled = bj.cwiseProduct(dinv);
    fit += bj.cwiseProduct(scaled).sum();
    fit2 += scaled.squaredNorm();
    const Matrix vj = ws.r_xi * scaled * ws.r_s.transpose();  // K_psi^{-1} Psi1^T y_j
    const auto yj = block_of(y, j, nx, ns);
    g.psi1_xi.noalias() += beta * (yj * fs) * vj.transpose();
    g.k_fu_s.noalias() += beta * yj.transpose() * (p * vj);
    vgv_x.noalias() += vj * gs * vj.transpose();
    vkv_x.noalias() += vj * kuu.k_s * vj.transpose();
    vpv_s.noalias() += vj.transpose() * p2 * vj;
    vkv_s.noalias() += vj.transpose() * kuu.k_xi * vj;
  }

  const Vector w_x_lam = dinv * lam_s;
  const Vector w_s_lam = dinv.transpose() * lam_x;
  const Vector w_x_one = dinv.rowwise().sum();
  const Vector w_s_one = dinv.colwise().sum().transpose();

  g.psi2_xi = -0.5 * dy * ws.r_xi * w_x_lam.asDiagonal() * ws.r_xi.transpose() -
              0.5 * beta * vgv_x + 0.5 * beta * dy * tr_cs * kx_inv;
  const Matrix g_gs = -0.5 * dy * ws.r_s * w_s_lam.asDiagonal() * ws.r_s.transpose() -
                      0.5 * beta * vpv_s + 0.5 * beta * dy * tr_cx * ks_inv;
  g.k_fu_s.noalias() += 2.0 * fs * g_gs;

  g.k_xi = -0.5 * dy / beta * ws.r_xi * w_x_one.asDiagonal() * ws.r_xi.transpose() +
           0.5 * dy * static_cast<double>(ms) * kx_inv - 0.5 * vkv_x -
           0.5 * beta * dy * tr_cs * (kx_inv * p2 * kx_inv);
  g.k_s = -0.5 * dy / beta * ws.r_s * w_s_one.asDiagonal() * ws.r_s.transpose() +
          0.5 * dy * static_cast<double>(mx) * ks_inv - 0.5 * vkv_s -
          0.5 * beta * dy * tr_cx * (ks_inv * gs * ks_inv);

  g.psi0_xi = -0.5 * beta * dy * psi.spatial_trace;
  g.spatial_trace = -0.5 * beta * dy * psi.latent.psi0;

  const double yy = y.squaredNorm();
  g.beta = 0.5 * dy * (n - m) / beta + 0.5 * dy / (beta * beta) * dinv.sum() - 0.5 * yy +
           0.5 * fit + 0.5 / beta * fit2 - 0.5 * dy * (psi.psi0_full() - tr_cx * tr_cs);
  return g;
}

double kl_iid(const VariationalLatent &q) { return kl_iid_with_grad(q).value; }

KlResult kl_iid_with_grad(const VariationalLatent &q) {
  if (q.mode != LatentMode::Iid) throw InputError("kl_iid requires an iid posterior");
  q.validate();
  const Eigen::ArrayXXd c = q.log_var.array().exp();
  KlResult r;
  r.value = 0.5 * (q.mu.array().square() + c - q.log_var.array() - 1.0).sum();
  r.grad.mu = q.mu;
  r.grad.log_var = 0.5 * (c - 1.0);
  return r;
}

namespace {

struct DynamicalKlBlock {
  double value = 0.0;
  Vector g_mu;
  Vector g_log_lambda;
  Matrix g_k;
};

DynamicalKlBlock dynamical_kl_block(const Vector &mu, const Vector &lambda,
                                    const Matrix &k, bool with_grad) {
  const Index n = k.rows();
  const Vector s = lambda.cwiseSqrt();
  Matrix b = s.asDiagonal() * k * s.asDiagonal();
  b.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(b);
  if (llt.info() != Eigen::Success) {
    throw DecompositionError("temporal covariance K_xx is not positive definite");
  }
  const Matrix binv = llt.solve(Matrix::Identity(n, n));
  const Matrix lb = llt.matrixL();
  const Vector kmu = k * mu;
  DynamicalKlBlock out;
  out.value = 0.5 * (mu.dot(kmu) - static_cast<double>(n) + binv.trace() +
                     2.0 * lb.diagonal().array().log().sum());
  if (with_grad) {
    const Matrix binv2 = binv * binv;
    out.g_mu = kmu;
    out.g_log_lambda = 0.5 * (Vector::Ones(n) - 2.0 * binv.diagonal() + binv2.diagonal());
    out.g_k = 0.5 * mu * mu.transpose() +
              0.5 * s.asDiagonal() * (binv - binv2) * s.asDiagonal();
  }
  return out;
}

}  // namespace

double kl_dynamical(const Matrix &mu, const Matrix &lambda, const Matrix &k_xx) {
  if (mu.rows() != k_xx.rows() || lambda.rows() != mu.rows() || lambda.cols() != mu.cols()) {
    throw ShapeError("kl_dynamical: shape mismatch");
  }
  if ((lambda.array() < 0.0).any()) throw InputError("Lambda must be nonnegative");
  double total = 0.0;
  for (Index j = 0; j < mu.cols(); ++j) {
    total += dynamical_kl_block(mu.col(j), lambda.col(j), k_xx, false).value;
  }
  return total;
}

double kl_dynamical(const VariationalLatent &q, const KernelSpec<double> &temporal,
                    double jitter) {
  if (q.mode != LatentMode::Dynamical) {
    throw InputError("kl_dynamical requires a dynamical posterior");
  }
  q.validate();
  const Matrix k = temporal_covariance(q.timestamps, temporal, jitter);
  return kl_dynamical(q.mu, q.log_var.array().exp().matrix(), k);
}

KlResult kl_dynamical_with_grad(const VariationalLatent &q,
                                const KernelSpec<double> &temporal, double jitter) {
  if (q.mode != LatentMode::Dynamical) {
    throw InputError("kl_dynamical requires a dynamical posterior");
  }
  q.validate();
  const Index n = q.size();
  const Matrix k = temporal_covariance(q.timestamps, temporal, jitter);
  KlResult r;
  r.grad.mu.resize(n, q.dim());
  r.grad.log_var.resize(n, q.dim());
  Matrix g_k = Matrix::Zero(n, n);
  for (Index j = 0; j < q.dim(); ++j) {
    const Vector lambda = q.log_var.col(j).array().exp();
    auto blk = dynamical_kl_block(q.mu.col(j), lambda, k, true);
    r.value += blk.value;
    r.grad.mu.col(j) = blk.g_mu;
    r.grad.log_var.col(j) = blk.g_log_lambda;
    g_k += blk.g_k;
  }
  r.grad.temporal_log_hyper = temporal_hyper_contract(q.timestamps, temporal, jitter, g_k);
  return r;
}

double kl_diagonal(const DiagonalGaussian &q, const DiagonalGaussian &p) {
  if (q.mean.size() != p.mean.size() || q.var.size() != q.mean.size() ||
      p.var.size() != p.mean.size()) {
    throw ShapeError("kl_diagonal: dimension mismatch");
  }
  if ((q.var.array() <= 0.0).any() || (p.var.array() <= 0.0).any()) {
    throw InputError("kl_diagonal: variances must be positive");
  }
  return 0.5 * ((p.var.array() / q.var.array()).log() +
                (q.var.array() + (q.mean - p.mean).array().square()) / p.var.array() - 1.0)
                   .sum();
}

Matrix OptimalInducingPosterior::d_grid() const {
  return ConstRowMap(d.values().data(), m_xi, m_s);
}

Matrix OptimalInducingPosterior::v_block(Index j) const {
  return block_of(v, j, m_xi, m_s);
}

Matrix OptimalInducingPosterior::mean_block(Index j) const {
  return block_of(mean, j, m_xi, m_s);
}

Matrix OptimalInducingPosterior::dense_covariance() const {
  const Matrix lq = KronMatrix<double>{Matrix(l_xi * eig.q_factors[0]),
                                       Matrix(l_s * eig.q_factors[1])}
                        .dense();
  return lq * d.inverse().asDiagonal() * lq.transpose() / beta;
}

OptimalInducingPosterior optimal_q_u(const BoundWorkspace &ws) {
  OptimalInducingPosterior qu;
  qu.m_xi = ws.m_xi;
  qu.m_s = ws.m_s;
  qu.d_y = ws.d_y;
  qu.beta = ws.beta;
  qu.l_xi = ws.l_xi;
  qu.l_s = ws.l_s;
  qu.r_xi = ws.r_xi;
  qu.r_s = ws.r_s;
  qu.eig = ws.eig;
  qu.d = ws.d;
  qu.k_xi_inv = chol_inverse(ws.l_xi);
  qu.k_s_inv = chol_inverse(ws.l_s);
  const Matrix dinv = ws.d_grid().cwiseInverse();
  const Matrix lq_x = ws.l_xi * ws.eig.q_factors[0];
  const Matrix lq_s = ws.l_s * ws.eig.q_factors[1];
  qu.mean.resize(ws.m(), ws.d_y);
  qu.v.resize(ws.m(), ws.d_y);
  for (Index j = 0; j < ws.d_y; ++j) {
    const Matrix scaled = block_of(ws.b, j, ws.m_xi, ws.m_s).cwiseProduct(dinv);
    RowMap(qu.mean.col(j).data(), ws.m_xi, ws.m_s) = lq_x * scaled * lq_s.transpose();
    RowMap(qu.v.col(j).data(), ws.m_xi, ws.m_s) = ws.r_xi * scaled * ws.r_s.transpose();
  }
  return qu;
}

TestBoundTerms test_bound_terms(const OptimalInducingPosterior &qu,
                                const Matrix &k_su_s, const Matrix &y_star,
                                double spatial_trace) {
  if (k_su_s.rows() != y_star.rows()) {
    throw ShapeError("test spatial inputs and observations have different row counts");
  }
  if (k_su_s.cols() != qu.m_s) {
    throw ShapeError("test spatial cross-covariance has wrong column count");
  }
  if (y_star.rows() > 0 && y_star.cols() != qu.d_y) {
    throw ShapeError("test observations have wrong channel count");
  }
  const double beta = qu.beta;
  const double dy = static_cast<double>(qu.d_y);
  TestBoundTerms t;
  t.n_obs = y_star.rows();
  t.cross = Vector::Zero(qu.m_xi);
  t.quad = Matrix::Zero(qu.m_xi, qu.m_xi);
  if (t.n_obs == 0) return t;

  t.constant = -0.5 * static_cast<double>(t.n_obs) * dy * (kLog2Pi - std::log(beta)) -
               0.5 * beta * y_star.squaredNorm();
  t.psi0_coeff = -0.5 * beta * dy * spatial_trace;

  const Matrix g = k_su_s.transpose() * k_su_s;
  Matrix vgv = Matrix::Zero(qu.m_xi, qu.m_xi);
  for (Index j = 0; j < qu.d_y; ++j) {
    const Matrix vj = qu.v_block(j);
    t.cross.noalias() += beta * vj * (k_su_s.transpose() * y_star.col(j));
    vgv.noalias() += vj * g * vj.transpose();
  }
  const Vector h = (qu.r_s.transpose() * g * qu.r_s).diagonal();
  const Vector w = qu.d_grid().cwiseInverse() * h;
  const double tr_ks_g = (qu.k_s_inv * g).trace();
  t.quad = -0.5 * beta * vgv - 0.5 * dy * qu.r_xi * w.asDiagonal() * qu.r_xi.transpose() +
           0.5 * beta * dy * tr_ks_g * qu.k_xi_inv;
  return t;
}

TestBoundValue test_bound(const TestBoundTerms &terms, const DiagonalGaussian &q_star,
                          const Matrix &z_xi, const KernelSpec<double> &latent_spec,
                          const DiagonalGaussian &prior, bool with_grad) {
  TestBoundValue out;
  const double kl = kl_diagonal(q_star, prior);
  out.value = -kl;
  const Index d = q_star.mean.size();
  out.g_mean = -(q_star.mean - prior.mean).cwiseQuotient(prior.var);
  out.g_log_var = -0.5 * (q_star.var.cwiseQuotient(prior.var).array() - 1.0).matrix();
  if (terms.n_obs == 0) return out;

  LatentMarginals marg{q_star.mean.transpose(), q_star.var.transpose()};
  const PsiSet psi = psi_rbf(marg, z_xi, latent_spec);
  out.value += terms.constant + terms.psi0_coeff * psi.psi0 +
               psi.psi1.row(0).dot(terms.cross) + psi.psi2.cwiseProduct(terms.quad).sum();
  if (!std::isfinite(out.value)) throw NumericError("non-finite test bound");
  if (with_grad) {
    const PsiGradient g = psi_rbf_backward(marg, z_xi, latent_spec, 0.0,
                                           terms.cross.transpose(), terms.quad);
    for (Index k = 0; k < d; ++k) {
      out.g_mean(k) += g.mean(0, k);
      out.g_log_var(k) += g.var(0, k) * q_star.var(k);
    }
  }
  return out;
}

}  // namespace sgplvm
