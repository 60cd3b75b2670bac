#include "sgplvm/predict.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sgplvm/psi.hpp"

namespace sgplvm {

namespace {

using RowMap = Eigen::Map<RowMat<double>>;

// Mean of f* for cross-covariance blocks k_xi (n_xi* x m_xi), k_s (n_s* x m_s).
Matrix kron_mean(const OptimalInducingPosterior &qu, const Matrix &k_xi, const Matrix &k_s) {
  const Index nx = k_xi.rows(), ns = k_s.rows();
  Matrix out(nx * ns, qu.d_y);
  for (Index j = 0; j < qu.d_y; ++j) {
    RowMap(out.col(j).data(), nx, ns) = k_xi * qu.v_block(j) * k_s.transpose();
  }
  return out;
}

// 1 - beta^{-1} D^{-1} on the inducing grid.
Matrix shrink_grid(const OptimalInducingPosterior &qu) {
  return (1.0 - (1.0 / qu.beta) * qu.d_grid().cwiseInverse().array()).matrix();
}

}  // namespace

PosteriorContext make_context(const SgplvmModel &model) {
  if (!model.trained) throw StateError("model has not been trained");
  const LatentMarginals marg = latent_marginals(model.q, model.temporal(), model.temporal_jitter);
  const StructuredPsiSet psi = structured_psi(marg, model.z_xi, model.z_s, model.x_s,
                                              model.latent_kernel, model.spatial_kernel,
                                              model.z_s_tied);
  const BoundWorkspace ws = build_workspace(psi, model_kuu(model), model.y, model.beta);
  return {model, optimal_q_u(ws)};
}

PredictiveGaussian predict_at(const PosteriorContext &ctx, const Matrix &x_xi_star,
                              const Matrix &x_s_star, bool want_full_cov) {
  const SgplvmModel &m = ctx.model;
  const auto &qu = ctx.qu;
  if (x_xi_star.cols() != m.latent_dim()) throw ShapeError("test latent dimension mismatch");
  if (x_s_star.cols() != m.x_s.cols()) throw ShapeError("test spatial dimension mismatch");
  const Matrix k_xi = kernel_matrix(m.latent_kernel, x_xi_star, m.z_xi);
  const Matrix k_s = kernel_matrix(m.spatial_kernel, x_s_star, m.z_s);
  PredictiveGaussian out;
  out.mean = kron_mean(qu, k_xi, k_s);

  const Matrix a_xi = k_xi * qu.r_xi;
  const Matrix a_s = k_s * qu.r_s;
  const Matrix w = shrink_grid(qu);
  const Vector kd_xi = kernel_diag(m.latent_kernel, x_xi_star);
  const Vector kd_s = kernel_diag(m.spatial_kernel, x_s_star);
  const Matrix reduce = a_xi.cwiseAbs2() * w * a_s.cwiseAbs2().transpose();  // n_xi* x n_s*
  const Index nx = x_xi_star.rows(), ns = x_s_star.rows();
  out.var.resize(nx * ns);
  for (Index i = 0; i < nx; ++i) {
    for (Index s = 0; s < ns; ++s) {
      const double prior = kd_xi(i) * kd_s(s);
      const double v = prior - reduce(i, s);
      if (v < -1e-8 * std::max(prior, 1.0)) {
        throw NumericError("negative predictive variance " + std::to_string(v));
      }
      out.var(i * ns + s) = std::max(v, 0.0);
    }
  }

  if (want_full_cov) {
    const Matrix kk_xi = kernel_matrix(m.latent_kernel, x_xi_star);
    const Matrix kk_s = kernel_matrix(m.spatial_kernel, x_s_star);
    out.cov.resize(nx * ns, nx * ns);
    for (Index i = 0; i < nx; ++i) {
      for (Index ip = i; ip < nx; ++ip) {
        const Vector wi = (a_xi.row(i).cwiseProduct(a_xi.row(ip)) * w).transpose();
        const Matrix blk = kk_xi(i, ip) * kk_s - a_s * wi.asDiagonal() * a_s.transpose();
        out.cov.block(i * ns, ip * ns, ns, ns) = blk;
        if (ip != i) out.cov.block(ip * ns, i * ns, ns, ns) = blk.transpose();
      }
    }
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  }
  return out;
}

Matrix predict_marginal_mean(const PosteriorContext &ctx, const LatentMarginals &q_star,
                             const Matrix &x_s_star) {
  const SgplvmModel &m = ctx.model;
  if (x_s_star.cols() != m.x_s.cols()) throw ShapeError("test spatial dimension mismatch");
  const Matrix psi1 = psi1_rbf(q_star, m.z_xi, m.latent_kernel);
  return kron_mean(ctx.qu, psi1, kernel_matrix(m.spatial_kernel, x_s_star, m.z_s));
}

Matrix MixturePrediction::mean() const {
  if (components.empty()) throw StateError("empty mixture");
  Matrix out = Matrix::Zero(components[0].mean.rows(), components[0].mean.cols());
  for (const auto &c : components) out += c.mean;
  return out / static_cast<double>(components.size());
}

Matrix MixturePrediction::variance() const {
  const Matrix mu = mean();
  Matrix second = Matrix::Zero(mu.rows(), mu.cols());
  for (const auto &c : components) {
    second += c.mean.cwiseAbs2();
    second.colwise() += c.var;
  }
  second /= static_cast<double>(components.size());
  return (second - mu.cwiseAbs2()).cwiseMax(0.0);
}

MixturePrediction predict_mixture(const PosteriorContext &ctx, const DiagonalGaussian &q_star,
                                  const Matrix &x_s_star, int n_mog, std::uint64_t seed,
                                  bool want_full_cov) {
  if (n_mog < 1) throw InputError("n_mog must be at least 1");
  if ((q_star.var.array() < 0.0).any()) throw InputError("negative latent variance");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MixturePrediction out;
  Matrix x(1, q_star.mean.size());
  for (int c = 0; c < n_mog; ++c) {
    for (Index d = 0; d < x.cols(); ++d) {
      x(0, d) = q_star.mean(d) + std::sqrt(q_star.var(d)) * normal(rng);
    }
    out.components.push_back(predict_at(ctx, x, x_s_star, want_full_cov));
  }
  return out;
}

PredictiveGaussian condition_on_observed(const PredictiveGaussian &pred,
                                         const std::vector<Index> &observed_idx,
                                         const Matrix &observed_values, double noise) {
  const Index n = pred.mean.rows();
  if (pred.cov.rows() != n || pred.cov.cols() != n) {
    throw InputError("conditioning requires the full predictive covariance");
  }
  if (static_cast<Index>(observed_idx.size()) != observed_values.rows() ||
      (observed_values.rows() > 0 && observed_values.cols() != pred.mean.cols())) {
    throw ShapeError("observed values do not match the observed indices");
  }
  std::vector<bool> seen(n, false);
  for (Index i : observed_idx) {
    if (i < 0 || i >= n) throw InputError("observed index out of range");
    if (seen[i]) throw InputError("duplicate observed index");
    seen[i] = true;
  }
  std::vector<Index> miss;
  for (Index i = 0; i < n; ++i) {
    if (!seen[i]) miss.push_back(i);
  }
  const Index no = static_cast<Index>(observed_idx.size());
  const Index nm = static_cast<Index>(miss.size());

  PredictiveGaussian out;
  out.mean = pred.mean(miss, Eigen::all);
  out.cov = pred.cov(miss, miss);
  if (no > 0 && nm > 0) {
    Matrix s_oo = pred.cov(observed_idx, observed_idx);
    s_oo.diagonal().array() += noise;
    Matrix l;
    try {
      l = jittered_cholesky<double>(s_oo, 0.0, "observed covariance").first;
    } catch (const DecompositionError &e) {
      throw ConditioningError(e.what());
    }
    const Matrix s_mo = pred.cov(miss, observed_idx);
    const Matrix resid = observed_values - pred.mean(observed_idx, Eigen::all);
    // G = L^{-1} S_om, so S_mo S_oo^{-1} = G^T L^{-1}.
    const Matrix g = l.triangularView<Eigen::Lower>().solve(s_mo.transpose());
    out.mean += g.transpose() * l.triangularView<Eigen::Lower>().solve(resid);
    out.cov -= g.transpose() * g;
  }
  out.var = out.cov.diagonal().cwiseMax(0.0);
  return out;
}

LatentMarginals dynamical_latent_at(const SgplvmModel &model, const Vector &t_star) {
  if (!model.has_temporal || model.q.mode != LatentMode::Dynamical) {
    throw StateError("model has no dynamical prior");
  }
  const Vector &t = model.q.timestamps;
  const Index n = t.size();
  const Matrix k = temporal_covariance(t, model.temporal_kernel, model.temporal_jitter);
  const Matrix k_sx = kernel_matrix(model.temporal_kernel, Matrix(t_star), Matrix(t));
  const Vector k_ss = kernel_diag(model.temporal_kernel, Matrix(t_star));
  LatentMarginals out;
  out.mean = k_sx * model.q.mu;
  out.var.resize(t_star.size(), model.q.dim());
  for (Index j = 0; j < model.q.dim(); ++j) {
    const Vector s = (0.5 * model.q.log_var.col(j).array()).exp();
    Matrix b = s.asDiagonal() * k * s.asDiagonal();
    b.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> llt(b);
    if (llt.info() != Eigen::Success) throw DecompositionError("temporal posterior factor failed");
    // K_*x (K + Lambda^{-1})^{-1} K_x* = (S K_x*)^T B^{-1} (S K_x*).
    const Matrix sk = s.asDiagonal() * k_sx.transpose();
    const Matrix half = llt.matrixL().solve(sk);
    out.var.col(j) = (k_ss - half.colwise().squaredNorm().transpose()).cwiseMax(0.0);
  }
  (void)n;
  return out;
}

}  // namespace sgplvm
