#include "sgplvm/baselines.hpp"

#include <cmath>

namespace sgplvm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Parameter vector: [kernel log-hyper..., log noise variance].
Vector pack_gp(const KernelSpec<double> &k, double noise) {
  Vector p(k.num_hyper() + 1);
  p << k.log_hyper(), std::log(noise);
  return p;
}

}  // namespace

double gp_log_marginal(const KernelSpec<double> &k, double noise_var, const Matrix &x,
                       const Vector &y, Vector *grad) {
  const Index n = x.rows();
  if (y.size() != n) throw ShapeError("GP regression inputs and targets differ in length");
  Matrix kxx = kernel_matrix(k, x);
  kxx.diagonal().array() += noise_var;
  Eigen::LLT<Matrix> llt(kxx);
  if (llt.info() != Eigen::Success) throw DecompositionError("GP covariance is not positive definite");
  const Vector alpha = llt.solve(y);
  const Matrix l = llt.matrixL();
  const double value = -0.5 * y.dot(alpha) - l.diagonal().array().log().sum() -
                       0.5 * static_cast<double>(n) * kLog2Pi;
  if (grad != nullptr) {
    const Matrix w = alpha * alpha.transpose() - llt.solve(Matrix::Identity(n, n));
    grad->resize(k.num_hyper() + 1);
    grad->head(k.num_hyper()) = 0.5 * kernel_hyper_contract(k, x, w);
    (*grad)(k.num_hyper()) = 0.5 * w.trace() * noise_var;
  }
  return value;
}

std::pair<Vector, Vector> GpRegression::predict(const Matrix &x_star) const {
  const Matrix ks = kernel_matrix(kernel, x_star, x);
  const Vector mean = (ks * alpha).array() + offset;
  const Matrix v = chol.triangularView<Eigen::Lower>().solve(ks.transpose());
  const Vector var = (kernel_diag(kernel, x_star) - v.colwise().squaredNorm().transpose()).cwiseMax(0.0);
  return {mean, var};
}

GpRegression fit_gp_regression(const Matrix &x, const Vector &y, KernelFamily family,
                               const GpFitOptions &opt) {
  if (x.rows() < 2) throw InputError("GP regression needs at least two observations");
  GpRegression g;
  g.x = x;
  g.offset = y.mean();
  g.y = y.array() - g.offset;
  const double data_var = std::max(g.y.squaredNorm() / static_cast<double>(y.size()), 1e-6);
  g.kernel.family = family;
  g.kernel.variance = data_var;
  g.kernel.lengthscales = Vector::Constant(1, opt.init_lengthscale);
  g.noise_var = opt.init_noise_ratio * data_var;

  KernelSpec<double> work = g.kernel;
  const Index nh = work.num_hyper();
  const Objective f = [&](const Vector &p, Vector *grad) {
    work.set_log_hyper(p.head(nh));
    const double noise = std::exp(p(nh)) + 1e-8 * data_var;
    const double v = gp_log_marginal(work, noise, g.x, g.y, grad);
    if (grad != nullptr) *grad = -*grad;
    return -v;
  };
  LbfgsOptions lo;
  lo.max_iters = opt.max_iters;
  lo.tolerance = opt.tolerance;
  const OptimResult r = lbfgs_minimize(f, pack_gp(g.kernel, g.noise_var), lo);
  if (!std::isfinite(r.f)) throw NumericError("GP regression fit failed");
  g.kernel.set_log_hyper(r.x.head(nh));
  g.noise_var = std::exp(r.x(nh)) + 1e-8 * data_var;

  Matrix kxx = kernel_matrix(g.kernel, g.x);
  kxx.diagonal().array() += g.noise_var;
  Eigen::LLT<Matrix> llt(kxx);
  g.chol = llt.matrixL();
  g.alpha = llt.solve(g.y);
  g.log_marginal = -r.f;
  return g;
}

namespace {

struct SpaceTimeState {
  Matrix q_t, q_s;
  Vector lam_t, lam_s;
  Matrix lam;    // n_t x n_s eigenvalues of the noisy covariance
  Matrix alpha;  // n_t x n_s
};

SpaceTimeState space_time_state(const KernelSpec<double> &kt, const KernelSpec<double> &ks,
                                double noise_var, const Vector &t, const Matrix &x_s,
                                const Vector &y) {
  const Index nt = t.size(), ns = x_s.rows();
  if (y.size() != nt * ns) throw ShapeError("space-time GP targets have the wrong length");
  const KronEig<double> e =
      factored_eig_sym(KronMatrix<double>({kernel_matrix<double>(kt, Matrix(t)), kernel_matrix(ks, x_s)}));
  SpaceTimeState s;
  s.q_t = e.q_factors[0];
  s.q_s = e.q_factors[1];
  s.lam_t = e.lambda_factors[0].cwiseMax(0.0);
  s.lam_s = e.lambda_factors[1].cwiseMax(0.0);
  s.lam = (s.lam_t * s.lam_s.transpose()).array() + noise_var;
  const Eigen::Map<const RowMat<double>> ym(y.data(), nt, ns);
  const Matrix rot = s.q_t.transpose() * ym * s.q_s;
  s.alpha = s.q_t * rot.cwiseQuotient(s.lam) * s.q_s.transpose();
  return s;
}

}  // namespace

double space_time_log_marginal(const KernelSpec<double> &kt, const KernelSpec<double> &ks,
                               double noise_var, const Vector &t, const Matrix &x_s,
                               const Vector &y, Vector *grad) {
  const SpaceTimeState s = space_time_state(kt, ks, noise_var, t, x_s, y);
  const Index nt = t.size(), ns = x_s.rows();
  const Eigen::Map<const RowMat<double>> ym(y.data(), nt, ns);
  const double value = -0.5 * ym.cwiseProduct(s.alpha).sum() - 0.5 * s.lam.array().log().sum() -
                       0.5 * static_cast<double>(nt * ns) * kLog2Pi;
  if (grad != nullptr) {
    const Matrix k_t = kernel_matrix<double>(kt, Matrix(t));
    const Matrix k_s = kernel_matrix(ks, x_s);
    const Matrix inv = s.lam.cwiseInverse();
    grad->resize(kt.num_hyper() + ks.num_hyper() + 1);
    // For dK = dK_t (x) K_s:  a^T dK a = <A, dK_t A K_s>,  tr(K^-1 dK) = sum diag(Q^T dK_t Q)_i lam_s_j / lam_ij.
    const auto dkt = kernel_grad_hyper<double>(kt, Matrix(t));
    for (std::size_t p = 0; p < dkt.size(); ++p) {
      const double quad = s.alpha.cwiseProduct(dkt[p] * s.alpha * k_s).sum();
      const Vector dd = (s.q_t.transpose() * dkt[p] * s.q_t).diagonal();
      const double tr = (dd.transpose() * inv * s.lam_s)(0, 0);
      (*grad)(static_cast<Index>(p)) = 0.5 * (quad - tr);
    }
    const auto dks = kernel_grad_hyper(ks, x_s);
    for (std::size_t p = 0; p < dks.size(); ++p) {
      const double quad = s.alpha.cwiseProduct(k_t * s.alpha * dks[p]).sum();
      const Vector dd = (s.q_s.transpose() * dks[p] * s.q_s).diagonal();
      const double tr = (s.lam_t.transpose() * inv * dd)(0, 0);
      (*grad)(kt.num_hyper() + static_cast<Index>(p)) = 0.5 * (quad - tr);
    }
    (*grad)(kt.num_hyper() + ks.num_hyper()) =
        0.5 * noise_var * (s.alpha.squaredNorm() - inv.sum());
  }
  return value;
}

std::pair<Vector, Vector> SpaceTimeGp::predict(const Vector &t_star) const {
  const Matrix k_st = kernel_matrix<double>(temporal, Matrix(t_star), Matrix(t));
  const Matrix k_s = kernel_matrix(spatial, x_s);
  const Index n = t_star.size(), ns = x_s.rows();
  const RowMat<double> mean = (k_st * alpha * k_s).array() + offset;
  const Matrix b = k_st * q_t;
  const Matrix c = k_s * q_s;
  const Matrix lam = (lam_t * lam_s.transpose()).array() + noise_var;
  const Matrix reduce = b.cwiseAbs2() * lam.cwiseInverse() * c.cwiseAbs2().transpose();
  const Vector kt = kernel_diag<double>(temporal, Matrix(t_star));
  const Vector kss = kernel_diag(spatial, x_s);
  RowMat<double> var = (kt * kss.transpose() - reduce).cwiseMax(0.0);
  return {Eigen::Map<const Vector>(mean.data(), n * ns), Eigen::Map<const Vector>(var.data(), n * ns)};
}

SpaceTimeGp fit_space_time_gp(const Vector &t, const Matrix &x_s, const Vector &y,
                              KernelFamily spatial_family, const GpFitOptions &opt) {
  SpaceTimeGp g;
  g.t = t;
  g.x_s = x_s;
  g.offset = y.mean();
  const Vector yc = y.array() - g.offset;
  const double data_var = std::max(yc.squaredNorm() / static_cast<double>(y.size()), 1e-6);
  g.temporal.family = KernelFamily::ArdRbf;
  g.temporal.variance = data_var;
  const double span = t.size() > 1 ? t.maxCoeff() - t.minCoeff() : 1.0;
  g.temporal.lengthscales = Vector::Constant(1, std::max(span / 10.0, 1e-3));
  g.spatial.family = spatial_family;
  g.spatial.variance = 1.0;
  g.spatial.lengthscales = Vector::Constant(1, opt.init_lengthscale);
  g.noise_var = opt.init_noise_ratio * data_var;

  // The spatial variance is fixed at 1; the temporal one carries the scale.
  KernelSpec<double> kt = g.temporal, ks = g.spatial;
  const Index nt_h = kt.num_hyper(), ns_h = ks.num_hyper();
  const Objective f = [&](const Vector &p, Vector *grad) {
    kt.set_log_hyper(p.head(nt_h));
    Vector hs(ns_h);
    hs << 0.0, p.segment(nt_h, ns_h - 1);
    ks.set_log_hyper(hs);
    const double noise = std::exp(p(p.size() - 1)) + 1e-8 * data_var;
    Vector full;
    const double v = space_time_log_marginal(kt, ks, noise, t, x_s, yc, grad ? &full : nullptr);
    if (grad != nullptr) {
      grad->resize(p.size());
      *grad << -full.head(nt_h), -full.segment(nt_h + 1, ns_h - 1), -full(full.size() - 1);
    }
    return -v;
  };
  Vector p0(nt_h + ns_h);
  p0 << g.temporal.log_hyper(), g.spatial.log_hyper().tail(ns_h - 1), std::log(g.noise_var);
  LbfgsOptions lo;
  lo.max_iters = opt.max_iters;
  lo.tolerance = opt.tolerance;
  const OptimResult r = lbfgs_minimize(f, p0, lo);
  if (!std::isfinite(r.f)) throw NumericError("space-time GP fit failed");
  f(r.x, nullptr);
  g.temporal = kt;
  g.spatial = ks;
  g.noise_var = std::exp(r.x(r.x.size() - 1)) + 1e-8 * data_var;
  const SpaceTimeState s = space_time_state(g.temporal, g.spatial, g.noise_var, t, x_s, yc);
  g.q_t = s.q_t;
  g.q_s = s.q_s;
  g.lam_t = s.lam_t;
  g.lam_s = s.lam_s;
  g.alpha = s.alpha;
  g.log_marginal = -r.f;
  return g;
}

}  // namespace sgplvm
