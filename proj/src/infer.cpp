#include "sgplvm/infer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sgplvm/optim.hpp"

namespace sgplvm {

void TestCase::validate(Index d_y, Index d_s) const {
  if (y_star.rows() != xs_star.rows()) {
    throw ShapeError("test case has " + std::to_string(y_star.rows()) + " observed values but " +
                     std::to_string(xs_star.rows()) + " spatial inputs");
  }
  if (y_star.rows() > 0 && y_star.cols() != d_y) throw ShapeError("test case channel count mismatch");
  if (xs_star.rows() > 0 && xs_star.cols() != d_s) throw ShapeError("test case spatial dimension mismatch");
  if (!observed_idx.empty() && static_cast<Index>(observed_idx.size()) != y_star.rows()) {
    throw ShapeError("observed index list does not match the observed values");
  }
  if (!y_star.allFinite()) throw InputError("test observations must be finite");
}

DiagonalGaussian test_latent_prior(const PosteriorContext &ctx, const TestCase &tc) {
  const SgplvmModel &m = ctx.model;
  const Index d = m.latent_dim();
  if (m.q.mode != LatentMode::Dynamical) return {Vector::Zero(d), Vector::Ones(d)};
  if (!tc.has_time()) {
    return {Vector::Zero(d), Vector::Constant(d, m.temporal_kernel.variance)};
  }
  const LatentMarginals at = dynamical_latent_at(m, Vector::Constant(1, tc.t_star));
  return {at.mean.row(0).transpose(), at.var.row(0).transpose().cwiseMax(1e-12)};
}

TestBoundTerms make_test_terms(const PosteriorContext &ctx, const TestCase &tc) {
  const SgplvmModel &m = ctx.model;
  tc.validate(m.d_y(), m.x_s.cols());
  if (tc.y_star.rows() == 0) {
    return test_bound_terms(ctx.qu, Matrix(0, m.z_s.rows()), Matrix(0, m.d_y()), 0.0);
  }
  const Matrix k_su = kernel_matrix(m.spatial_kernel, tc.xs_star, m.z_s);
  const double trace = kernel_diag(m.spatial_kernel, tc.xs_star).sum();
  return test_bound_terms(ctx.qu, k_su, tc.y_star, trace);
}

TestBoundValue evaluate_test_bound(const PosteriorContext &ctx, const TestBoundTerms &terms,
                                   const DiagonalGaussian &prior, const DiagonalGaussian &q,
                                   bool with_grad) {
  return test_bound(terms, q, ctx.model.z_xi, ctx.model.latent_kernel, prior, with_grad);
}

namespace {

Vector pack_q(const DiagonalGaussian &q) {
  Vector x(2 * q.mean.size());
  x << q.mean, q.var.array().log().matrix();
  return x;
}

DiagonalGaussian unpack_q(const Vector &x) {
  const Index d = x.size() / 2;
  return {x.head(d), x.tail(d).array().exp().matrix()};
}

double safe_bound(const PosteriorContext &ctx, const TestBoundTerms &terms,
                  const DiagonalGaussian &prior, const DiagonalGaussian &q) {
  try {
    const double v = evaluate_test_bound(ctx, terms, prior, q, false).value;
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  } catch (const Error &) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

InferResult infer_latent(const PosteriorContext &ctx, const TestCase &tc, const InferConfig &cfg) {
  if (cfg.restarts < 1) throw ConfigError("restarts must be at least 1");
  if (cfg.max_iters < 0) throw ConfigError("max_iters must be non-negative");
  const SgplvmModel &m = ctx.model;
  const TestBoundTerms terms = make_test_terms(ctx, tc);
  InferResult res;
  res.prior = test_latent_prior(ctx, tc);
  const Index d = m.latent_dim();

  std::vector<DiagonalGaussian> starts;
  {
    const LatentMarginals train = latent_marginals(m.q, m.temporal(), m.temporal_jitter);
    double best = -std::numeric_limits<double>::infinity();
    DiagonalGaussian pick = res.prior;
    for (Index i = 0; i < train.mean.rows(); ++i) {
      const DiagonalGaussian cand{train.mean.row(i).transpose(),
                                  train.var.row(i).transpose().cwiseMax(1e-8)};
      const double v = safe_bound(ctx, terms, res.prior, cand);
      if (v > best) {
        best = v;
        pick = cand;
      }
    }
    starts.push_back(pick);
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 1; r < cfg.restarts; ++r) {
    DiagonalGaussian s{Vector(d), 0.5 * res.prior.var};
    for (Index k = 0; k < d; ++k) s.mean(k) = res.prior.mean(k) + std::sqrt(res.prior.var(k)) * normal(rng);
    starts.push_back(s);
  }

  const Objective objective = [&](const Vector &x, Vector *grad) {
    const TestBoundValue v = evaluate_test_bound(ctx, terms, res.prior, unpack_q(x), grad != nullptr);
    if (grad != nullptr) {
      grad->resize(x.size());
      *grad << -v.g_mean, -v.g_log_var;
    }
    return -v.value;
  };

  res.bound = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    const double init = safe_bound(ctx, terms, res.prior, starts[r]);
    res.init_bounds.push_back(init);
    DiagonalGaussian q = starts[r];
    double value = init;
    if (terms.n_obs == 0) {
      // Only the KL term remains, so the optimum is the prior itself.
      q = res.prior;
      value = safe_bound(ctx, terms, res.prior, q);
    } else if (std::isfinite(init) && cfg.max_iters > 0) {
      OptimResult opt;
      if (cfg.optimizer == OptimizerKind::Lbfgs) {
        LbfgsOptions o;
        o.max_iters = cfg.max_iters;
        o.tolerance = cfg.tolerance;
        opt = lbfgs_minimize(objective, pack_q(starts[r]), o);
      } else {
        AdamOptions o;
        o.max_iters = cfg.max_iters;
        o.tolerance = cfg.tolerance;
        o.learning_rate = cfg.learning_rate;
        opt = adam_minimize(objective, pack_q(starts[r]), o);
      }
      if (std::isfinite(opt.f) && -opt.f >= init) {
        q = unpack_q(opt.x);
        value = -opt.f;
      }
    }
    res.final_bounds.push_back(value);
    if (value > res.bound) {
      res.bound = value;
      res.q = q;
      res.best_restart = r;
    }
  }
  if (!std::isfinite(res.bound)) throw InferenceError("every restart of latent inference failed");
  return res;
}

ImputeResult impute(const PosteriorContext &ctx, const TestCase &tc, const Matrix &x_s_full,
                    const ImputeOptions &opt) {
  const SgplvmModel &m = ctx.model;
  tc.validate(m.d_y(), m.x_s.cols());
  const Index n = x_s_full.rows();
  if (x_s_full.cols() != m.x_s.cols()) throw ShapeError("full spatial inputs have wrong dimension");
  if (static_cast<Index>(tc.observed_idx.size()) != tc.y_star.rows()) {
    throw InputError("imputation needs the grid positions of the observed values");
  }
  std::vector<bool> seen(n, false);
  for (std::size_t k = 0; k < tc.observed_idx.size(); ++k) {
    const Index i = tc.observed_idx[k];
    if (i < 0 || i >= n) throw InputError("observed index out of range");
    if (seen[i]) throw InputError("duplicate observed index");
    seen[i] = true;
    if ((x_s_full.row(i) - tc.xs_star.row(static_cast<Index>(k))).cwiseAbs().maxCoeff() > 1e-9) {
      throw InputError("observed spatial input does not match the full grid");
    }
  }

  ImputeResult out;
  for (Index i = 0; i < n; ++i) {
    if (!seen[i]) out.missing_idx.push_back(i);
  }
  out.latent = infer_latent(ctx, tc, opt.infer);
  const Index nm = static_cast<Index>(out.missing_idx.size());
  out.mean.resize(nm, m.d_y());
  out.var.resize(nm, m.d_y());
  if (nm == 0) return out;

  const DiagonalGaussian &q = out.latent.q;
  const Matrix mean = predict_marginal_mean(ctx, LatentMarginals{q.mean.transpose(), q.var.transpose()},
                                            x_s_full);
  const MixturePrediction mix = predict_mixture(ctx, q, x_s_full, opt.n_mog, opt.seed, true);
  const Index c = mix.size();
  Matrix avg_cov = Matrix::Zero(n, n);
  for (const auto &comp : mix.components) avg_cov += comp.cov;
  avg_cov /= static_cast<double>(c);
  const Matrix mix_mean = mix.mean();
  const double noise = opt.observation_noise ? 1.0 / m.beta : 0.0;

  for (Index j = 0; j < m.d_y(); ++j) {
    Matrix spread(n, c);
    for (Index k = 0; k < c; ++k) spread.col(k) = mix.components[k].mean.col(j) - mix_mean.col(j);
    PredictiveGaussian g;
    g.mean = mean.col(j);
    g.cov = avg_cov + spread * spread.transpose() / static_cast<double>(c);
    g.var = g.cov.diagonal();
    const PredictiveGaussian cond =
        condition_on_observed(g, tc.observed_idx, tc.y_star.col(j), noise);
    out.mean.col(j) = cond.mean.col(0);
    out.var.col(j) = cond.var;
  }
  return out;
}

}  // namespace sgplvm
