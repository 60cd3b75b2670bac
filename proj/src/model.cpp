#include "sgplvm/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "sgplvm/psi.hpp"

namespace sgplvm {

Matrix cartesian_product(const std::vector<Matrix> &factors) {
  if (factors.empty()) throw ShapeError("at least one spatial factor is required");
  Index rows = 1, cols = 0;
  for (const auto &f : factors) {
    rows *= f.rows();
    cols += f.cols();
  }
  Matrix out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    Index rem = r;
    Index col = cols;
    for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
      const Index i = rem % it->rows();
      rem /= it->rows();
      col -= it->cols();
      out.block(r, col, 1, it->cols()) = it->row(i);
    }
  }
  return out;
}

Index ObservationGrid::n_s() const {
  Index n = 1;
  for (const auto &f : spatial_factors) n *= f.rows();
  return n;
}

void ObservationGrid::validate() const {
  if (spatial_factors.empty()) throw ShapeError("observation grid has no spatial factors");
  if (n_xi <= 0) throw ShapeError("observation grid has no examples");
  if (y.rows() != n_xi * n_s()) {
    throw ShapeError("Y has " + std::to_string(y.rows()) + " rows, expected n_xi * n_s = " +
                     std::to_string(n_xi * n_s()));
  }
  if (!y.allFinite()) throw DataError("training data contains missing or non-finite values");
  if (timestamps.size() != 0 && timestamps.size() != n_xi) {
    throw ShapeError("expected one timestamp per example");
  }
}

Standardizer Standardizer::fit(const Matrix &y) {
  Standardizer s;
  s.mean = y.colwise().mean().transpose();
  s.scale.resize(y.cols());
  for (Index j = 0; j < y.cols(); ++j) {
    const double sd =
        std::sqrt((y.col(j).array() - s.mean(j)).square().sum() / std::max<Index>(y.rows(), 1));
    s.scale(j) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(Index d_y) {
  return {Vector::Zero(d_y), Vector::Ones(d_y)};
}

Matrix Standardizer::apply(const Matrix &y) const {
  if (y.cols() != mean.size()) throw ShapeError("standardizer channel count mismatch");
  return ((y.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
      .matrix();
}

Matrix Standardizer::invert(const Matrix &y) const {
  if (y.cols() != mean.size()) throw ShapeError("standardizer channel count mismatch");
  return ((y.array().rowwise() * scale.transpose().array()).rowwise() +
          mean.transpose().array())
      .matrix();
}

Matrix Standardizer::invert_variance(const Matrix &v) const {
  return (v.array().rowwise() * scale.transpose().array().square()).matrix();
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "lbfgs"; }

OptimizerKind optimizer_from_string(const std::string &s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "lbfgs") return OptimizerKind::Lbfgs;
  throw ConfigError("unknown optimizer '" + s + "'");
}

std::string to_string(InitKind k) { return k == InitKind::Pca ? "pca" : "random"; }

InitKind init_from_string(const std::string &s) {
  if (s == "pca") return InitKind::Pca;
  if (s == "random") return InitKind::Random;
  throw ConfigError("unknown init '" + s + "'");
}

void TrainConfig::validate() const {
  if (max_iters < 0) throw ConfigError("max_iters must be nonnegative");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (latent_dim < 1) throw ConfigError("latent_dim must be at least 1");
  if (m_xi < 1) throw ConfigError("m_xi must be at least 1");
  if (m_s < 0) throw ConfigError("m_s must be nonnegative");
  if (fixed_beta_iters < 0) throw ConfigError("fixed_beta_iters must be nonnegative");
  if (!(init_beta > 0.0)) throw ConfigError("init_beta must be positive");
  if (!(init_latent_var > 0.0)) throw ConfigError("init_latent_var must be positive");
  if (!(jitter >= 0.0)) throw ConfigError("jitter must be nonnegative");
  if (lbfgs_memory < 1) throw ConfigError("lbfgs_memory must be at least 1");
}

namespace {

Vector column_std(const Matrix &x) {
  Vector out(x.cols());
  for (Index d = 0; d < x.cols(); ++d) {
    const double mu = x.col(d).mean();
    out(d) = std::sqrt((x.col(d).array() - mu).square().mean());
  }
  return out;
}

Matrix pca_latents(const ObservationGrid &data, Index d) {
  const Index ns = data.n_s(), dy = data.d_y();
  Matrix yhat(data.n_xi, ns * dy);
  for (Index i = 0; i < data.n_xi; ++i) {
    for (Index s = 0; s < ns; ++s) {
      yhat.block(i, s * dy, 1, dy) = data.y.row(i * ns + s);
    }
  }
  yhat.rowwise() -= yhat.colwise().mean();
  Eigen::BDCSVD<Matrix> svd(yhat, Eigen::ComputeThinU);
  Matrix x = svd.matrixU().leftCols(d) * svd.singularValues().head(d).asDiagonal();
  const Vector sd = column_std(x);
  for (Index k = 0; k < d; ++k) {
    if (sd(k) > 1e-12) x.col(k) /= sd(k);
  }
  return x;
}

// Deterministic farthest-point subset of the rows of x.
Matrix farthest_points(const Matrix &x, Index m) {
  std::vector<Index> chosen{0};
  Vector dist = (x.rowwise() - x.row(0)).rowwise().squaredNorm();
  while (static_cast<Index>(chosen.size()) < m) {
    Index best = 0;
    dist.maxCoeff(&best);
    chosen.push_back(best);
    dist = dist.cwiseMin((x.rowwise() - x.row(best)).rowwise().squaredNorm());
  }
  Matrix out(m, x.cols());
  for (Index k = 0; k < m; ++k) out.row(k) = x.row(chosen[k]);
  return out;
}

bool factors_ok(const SgplvmModel &m) {
  const KuuFactors k = model_kuu(m);
  return Eigen::LLT<Matrix>(k.k_xi).info() == Eigen::Success &&
         Eigen::LLT<Matrix>(k.k_s).info() == Eigen::Success;
}

}  // namespace

SgplvmModel initialize(const ObservationGrid &data, const TrainConfig &cfg) {
  cfg.validate();
  data.validate();
  SgplvmModel m;
  m.x_s = data.spatial_inputs();
  m.y = data.y;
  m.n_xi = data.n_xi;
  m.standardizer = Standardizer::identity(data.d_y());
  const Index ns = data.n_s(), d = cfg.latent_dim;
  if (d > std::min(data.n_xi, ns * data.d_y())) {
    throw ConfigError("latent_dim exceeds min(n_xi, n_s * d_y)");
  }
  if (cfg.m_xi > data.n_xi) throw ConfigError("m_xi exceeds the number of examples");
  const Index m_s = cfg.m_s == 0 ? ns : cfg.m_s;
  if (m_s > ns) throw ConfigError("m_s exceeds the number of spatial points");

  std::mt19937_64 rng(cfg.seed);
  Matrix x;
  if (cfg.init == InitKind::Pca) {
    x = pca_latents(data, d);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    x.resize(data.n_xi, d);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  }

  // Dynamical models start from the GP-smoothed initial latents, treating
  // them as observations with noise variance init_latent_var.
  Matrix dyn_mu;
  if (cfg.latent_mode == LatentMode::Dynamical) {
    if (data.timestamps.size() != data.n_xi) {
      throw ConfigError("the dynamical prior needs timestamps for every example");
    }
    m.has_temporal = true;
    m.q.timestamps = data.timestamps;
    m.temporal_kernel.family = cfg.temporal_family;
    m.temporal_kernel.variance = 1.0;
    const double span = data.timestamps.maxCoeff() - data.timestamps.minCoeff();
    m.temporal_kernel.lengthscales = Vector::Constant(
        1, cfg.temporal_lengthscale > 0.0 ? cfg.temporal_lengthscale
                                          : std::max(span / 10.0, 1e-3));
    const Matrix k = temporal_covariance(m.q.timestamps, m.temporal_kernel, m.temporal_jitter);
    Matrix noisy = k;
    noisy.diagonal().array() += cfg.init_latent_var;
    dyn_mu = noisy.llt().solve(x);
    x = k * dyn_mu;
  }

  m.latent_kernel.family = KernelFamily::ArdRbf;
  m.latent_kernel.variance = 1.0;
  m.latent_kernel.lengthscales = column_std(x).unaryExpr(
      [](double v) { return v > 1e-6 ? v : 1.0; });

  m.spatial_kernel.family = cfg.spatial_family;
  m.spatial_kernel.variance = 1.0;
  Vector ls = cfg.spatial_lengthscale > 0.0
                  ? Vector(Vector::Constant(m.x_s.cols(), cfg.spatial_lengthscale))
                  : Vector(column_std(m.x_s).unaryExpr([](double v) { return v > 1e-6 ? v : 1.0; }));
  if (cfg.spatial_shared_lengthscale) ls = Vector::Constant(1, ls.mean());
  m.spatial_kernel.lengthscales = ls;

  if (cfg.m_xi == data.n_xi) {
    m.z_xi = x;
  } else {
    std::vector<Index> idx(data.n_xi);
    std::iota(idx.begin(), idx.end(), Index(0));
    std::shuffle(idx.begin(), idx.end(), rng);
    m.z_xi.resize(cfg.m_xi, d);
    for (Index k = 0; k < cfg.m_xi; ++k) m.z_xi.row(k) = x.row(idx[k]);
  }
  if (m_s == ns) {
    m.z_s = m.x_s;
    m.z_s_tied = true;
  } else {
    m.z_s = farthest_points(m.x_s, m_s);
    m.optimize_z_s = cfg.optimize_z_s;
  }

  m.q.mode = cfg.latent_mode;
  m.beta = cfg.init_beta;
  m.jitter = cfg.jitter;
  if (cfg.latent_mode == LatentMode::Iid) {
    m.q.mu = x;
    m.q.log_var = Matrix::Constant(data.n_xi, d, std::log(cfg.init_latent_var));
  } else {
    m.q.mu = dyn_mu;
    m.q.log_var = Matrix::Constant(data.n_xi, d, std::log(1.0 / cfg.init_latent_var));
  }
  m.q.validate();

  while (!factors_ok(m)) {
    if (m.jitter >= 1e-2) throw DecompositionError("inducing covariance is singular");
    m.jitter = m.jitter > 0.0 ? m.jitter * 10.0 : 1e-8;
  }
  return m;
}

KuuFactors model_kuu(const SgplvmModel &m) {
  KuuFactors k{kernel_matrix(m.latent_kernel, m.z_xi), kernel_matrix(m.spatial_kernel, m.z_s)};
  k.k_xi.diagonal().array() += m.jitter * m.latent_kernel.variance;
  k.k_s.diagonal().array() += m.jitter * m.spatial_kernel.variance;
  return k;
}

ParamLayout param_layout(const SgplvmModel &m) {
  ParamLayout l;
  const Index nd = m.q.mu.size();
  l.mu = 0;
  l.log_var = nd;
  l.latent_hyper = 2 * nd;
  l.spatial_hyper = l.latent_hyper + m.latent_kernel.num_hyper();
  l.temporal_hyper = l.spatial_hyper + m.spatial_kernel.num_hyper();
  l.log_beta = l.temporal_hyper + (m.has_temporal ? m.temporal_kernel.num_hyper() : 0);
  l.z_xi = l.log_beta + 1;
  l.z_s = l.z_xi + m.z_xi.size();
  l.size = l.z_s + (m.optimize_z_s && !m.z_s_tied ? m.z_s.size() : 0);
  return l;
}

Vector pack(const SgplvmModel &m) {
  const ParamLayout l = param_layout(m);
  Vector t(l.size);
  const Index nd = m.q.mu.size();
  t.segment(l.mu, nd) = Eigen::Map<const Vector>(m.q.mu.data(), nd);
  t.segment(l.log_var, nd) = Eigen::Map<const Vector>(m.q.log_var.data(), nd);
  t.segment(l.latent_hyper, m.latent_kernel.num_hyper()) = m.latent_kernel.log_hyper();
  t.segment(l.spatial_hyper, m.spatial_kernel.num_hyper()) = m.spatial_kernel.log_hyper();
  if (m.has_temporal) {
    t.segment(l.temporal_hyper, m.temporal_kernel.num_hyper()) = m.temporal_kernel.log_hyper();
  }
  t(l.log_beta) = std::log(m.beta);
  t.segment(l.z_xi, m.z_xi.size()) = Eigen::Map<const Vector>(m.z_xi.data(), m.z_xi.size());
  if (l.size > l.z_s) {
    t.segment(l.z_s, m.z_s.size()) = Eigen::Map<const Vector>(m.z_s.data(), m.z_s.size());
  }
  return t;
}

void unpack(SgplvmModel &m, const Vector &t) {
  const ParamLayout l = param_layout(m);
  if (t.size() != l.size) throw ShapeError("parameter vector has the wrong length");
  const Index nd = m.q.mu.size();
  Eigen::Map<Vector>(m.q.mu.data(), nd) = t.segment(l.mu, nd);
  Eigen::Map<Vector>(m.q.log_var.data(), nd) = t.segment(l.log_var, nd);
  m.latent_kernel.set_log_hyper(t.segment(l.latent_hyper, m.latent_kernel.num_hyper()));
  m.spatial_kernel.set_log_hyper(t.segment(l.spatial_hyper, m.spatial_kernel.num_hyper()));
  if (m.has_temporal) {
    m.temporal_kernel.set_log_hyper(t.segment(l.temporal_hyper, m.temporal_kernel.num_hyper()));
  }
  m.beta = std::exp(t(l.log_beta));
  Eigen::Map<Vector>(m.z_xi.data(), m.z_xi.size()) = t.segment(l.z_xi, m.z_xi.size());
  if (l.size > l.z_s) {
    Eigen::Map<Vector>(m.z_s.data(), m.z_s.size()) = t.segment(l.z_s, m.z_s.size());
  }
}

double evaluate_bound(const SgplvmModel &m, Vector *grad) {
  const LatentMarginals marg = latent_marginals(m.q, m.temporal(), m.temporal_jitter);
  const StructuredPsiSet psi = structured_psi(marg, m.z_xi, m.z_s, m.x_s, m.latent_kernel,
                                              m.spatial_kernel, m.z_s_tied);
  const KuuFactors kuu = model_kuu(m);
  const BoundWorkspace ws = build_workspace(psi, kuu, m.y, m.beta);

  KlResult kl;
  if (grad == nullptr) {
    kl.value = m.q.mode == LatentMode::Iid
                   ? kl_iid(m.q)
                   : kl_dynamical(m.q, m.temporal_kernel, m.temporal_jitter);
  } else {
    kl = m.q.mode == LatentMode::Iid
             ? kl_iid_with_grad(m.q)
             : kl_dynamical_with_grad(m.q, m.temporal_kernel, m.temporal_jitter);
  }
  const double value = collapsed_bound(ws, psi.psi0_full(), m.y, kl.value);
  if (grad == nullptr) return value;

  const ParamLayout l = param_layout(m);
  grad->setZero(l.size);
  const BoundGradient bg = collapsed_bound_gradient(ws, psi, kuu, m.y);

  const PsiGradient pg = psi_rbf_backward(marg, m.z_xi, m.latent_kernel, bg.psi0_xi,
                                          bg.psi1_xi, bg.psi2_xi);
  const LatentGradient lg =
      latent_marginals_backward(m.q, m.temporal(), m.temporal_jitter, pg.mean, pg.var);
  const Index nd = m.q.mu.size();
  const Matrix g_mu = lg.mu - kl.grad.mu;
  const Matrix g_lv = lg.log_var - kl.grad.log_var;
  grad->segment(l.mu, nd) = Eigen::Map<const Vector>(g_mu.data(), nd);
  grad->segment(l.log_var, nd) = Eigen::Map<const Vector>(g_lv.data(), nd);

  Vector g_lat = pg.log_hyper + kernel_hyper_contract(m.latent_kernel, m.z_xi, bg.k_xi);
  g_lat(0) += m.jitter * m.latent_kernel.variance * bg.k_xi.trace();
  grad->segment(l.latent_hyper, g_lat.size()) = g_lat;
  const Matrix g_zxi = pg.z + kernel_input_contract(m.latent_kernel, m.z_xi, bg.k_xi);
  grad->segment(l.z_xi, g_zxi.size()) = Eigen::Map<const Vector>(g_zxi.data(), g_zxi.size());

  Vector g_sp = kernel_hyper_contract(m.spatial_kernel, m.z_s, bg.k_s);
  g_sp(0) += m.jitter * m.spatial_kernel.variance * bg.k_s.trace();
  g_sp(0) += bg.spatial_trace * psi.spatial_trace;
  if (m.z_s_tied) {
    g_sp += kernel_hyper_contract(m.spatial_kernel, m.x_s, bg.k_fu_s);
  } else {
    g_sp += kernel_hyper_contract(m.spatial_kernel, m.x_s, m.z_s, bg.k_fu_s);
  }
  grad->segment(l.spatial_hyper, g_sp.size()) = g_sp;
  if (l.size > l.z_s) {
    const Matrix g_zs =
        kernel_input_contract(m.spatial_kernel, m.x_s, m.z_s, bg.k_fu_s).second +
        kernel_input_contract(m.spatial_kernel, m.z_s, bg.k_s);
    grad->segment(l.z_s, g_zs.size()) = Eigen::Map<const Vector>(g_zs.data(), g_zs.size());
  }

  if (m.has_temporal) {
    const Vector g_t = lg.temporal_log_hyper - kl.grad.temporal_log_hyper;
    grad->segment(l.temporal_hyper, g_t.size()) = g_t;
  }
  (*grad)(l.log_beta) = bg.beta * m.beta;
  return value;
}

TrainResult train(const SgplvmModel &model, const TrainConfig &cfg) {
  cfg.validate();
  TrainResult res;
  res.model = model;
  res.initial_bound = evaluate_bound(model);
  if (!std::isfinite(res.initial_bound)) throw NumericError("initial bound is not finite");
  res.final_bound = res.initial_bound;
  if (cfg.max_iters == 0) {
    res.status = "no iterations requested";
    return res;
  }

  const ParamLayout layout = param_layout(model);
  SgplvmModel work = model;
  const auto start = std::chrono::steady_clock::now();
  int offset = 0;
  Vector theta = pack(model);

  auto run_phase = [&](int iters, bool freeze_beta) {
    Objective obj = [&](const Vector &x, Vector *g) {
      unpack(work, x);
      const double v = evaluate_bound(work, g);
      if (g != nullptr) {
        *g = -*g;
        if (freeze_beta) (*g)(layout.log_beta) = 0.0;
      }
      return -v;
    };
    IterationCallback cb = [&](int it, double f, double gn, const Vector &x) {
      TraceRow row;
      row.iter = offset + it;
      row.bound = -f;
      row.beta = std::exp(x(layout.log_beta));
      row.grad_norm = gn;
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
      res.trace.push_back(row);
      return true;
    };
    OptimResult r;
    if (cfg.optimizer == OptimizerKind::Lbfgs) {
      LbfgsOptions o;
      o.max_iters = iters;
      o.memory = cfg.lbfgs_memory;
      o.tolerance = cfg.tolerance;
      r = lbfgs_minimize(obj, theta, o, cb);
    } else {
      AdamOptions o;
      o.max_iters = iters;
      o.learning_rate = cfg.learning_rate;
      o.tolerance = cfg.tolerance;
      r = adam_minimize(obj, theta, o, cb);
    }
    if (!std::isfinite(r.f)) {
      throw NumericError("bound is not finite at the start of optimization");
    }
    offset += r.iterations;
    theta = r.x;
    res.status = r.status;
  };

  const int phase1 = std::min(cfg.fixed_beta_iters, cfg.max_iters);
  if (phase1 > 0) run_phase(phase1, true);
  if (cfg.max_iters - offset > 0) run_phase(cfg.max_iters - offset, false);

  unpack(res.model, theta);
  res.model.trained = true;
  res.model.iterations_done = model.iterations_done + offset;
  res.final_bound = evaluate_bound(res.model);
  return res;
}

}  // namespace sgplvm
