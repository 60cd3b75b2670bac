#include "dense_oracle.hpp"

#include <cmath>
#include <random>

namespace oracle {

namespace {

constexpr double kPi = 3.14159265358979323846;

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * kPi * var);
}

// E[k(x, z)] for x ~ N(mean, diag(var)), as a product of 1-D Gaussian
// convolutions.
double expect_k(const Spec &spec, const Vector &mean, const Vector &var,
                const Vector &z) {
  double out = spec.variance;
  for (Index d = 0; d < mean.size(); ++d) {
    const double l2 = spec.lengthscale(d) * spec.lengthscale(d);
    out *= std::sqrt(2.0 * kPi * l2) * normal_pdf(mean(d), z(d), var(d) + l2);
  }
  return out;
}

// E[k(x, a) k(x, b)].
double expect_kk(const Spec &spec, const Vector &mean, const Vector &var,
                 const Vector &a, const Vector &b) {
  double out = spec.variance * spec.variance;
  for (Index d = 0; d < mean.size(); ++d) {
    const double l2 = spec.lengthscale(d) * spec.lengthscale(d);
    const double mid = 0.5 * (a(d) + b(d));
    out *= std::exp(-(a(d) - b(d)) * (a(d) - b(d)) / (4.0 * l2)) *
           std::sqrt(kPi * l2) * normal_pdf(mean(d), mid, var(d) + 0.5 * l2);
  }
  return out;
}

double logdet_spd(const Matrix &a) {
  Eigen::LLT<Matrix> llt(a);
  const Matrix l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

Matrix inv_spd(const Matrix &a) {
  return a.llt().solve(Matrix::Identity(a.rows(), a.cols()));
}

}  // namespace

Matrix product_kernel(const Matrix &xi1, const Matrix &s1, const Matrix &xi2,
                      const Matrix &s2, const Spec &latent, const Spec &spatial,
                      double jit_xi, double jit_s) {
  Matrix kx = sgplvm::kernel_matrix(latent, xi1, xi2);
  Matrix ks = sgplvm::kernel_matrix(spatial, s1, s2);
  if (jit_xi != 0.0) kx.diagonal().array() += jit_xi;
  if (jit_s != 0.0) ks.diagonal().array() += jit_s;
  const Index n1 = xi1.rows() * s1.rows(), n2 = xi2.rows() * s2.rows();
  Matrix out(n1, n2);
  for (Index r = 0; r < n1; ++r) {
    for (Index c = 0; c < n2; ++c) {
      out(r, c) = kx(r / s1.rows(), c / s2.rows()) * ks(r % s1.rows(), c % s2.rows());
    }
  }
  return out;
}

DensePsi dense_psi(const Matrix &mean, const Matrix &var, const Matrix &z_xi,
                   const Matrix &z_s, const Matrix &x_s, const Spec &latent,
                   const Spec &spatial) {
  const Index nx = mean.rows(), ns = x_s.rows(), mx = z_xi.rows(), ms = z_s.rows();
  const Matrix ks = sgplvm::kernel_matrix(spatial, x_s, z_s);
  const Vector kss = sgplvm::kernel_diag(spatial, x_s);
  DensePsi out;
  out.psi1.resize(nx * ns, mx * ms);
  out.psi2 = Matrix::Zero(mx * ms, mx * ms);
  for (Index i = 0; i < nx; ++i) {
    const Vector mu = mean.row(i).transpose();
    const Vector c = var.row(i).transpose();
    for (Index is = 0; is < ns; ++is) {
      out.psi0 += latent.variance * kss(is);
      for (Index k = 0; k < mx * ms; ++k) {
        out.psi1(i * ns + is, k) =
            expect_k(latent, mu, c, z_xi.row(k / ms).transpose()) * ks(is, k % ms);
      }
      for (Index k = 0; k < mx * ms; ++k) {
        for (Index kp = 0; kp < mx * ms; ++kp) {
          out.psi2(k, kp) += expect_kk(latent, mu, c, z_xi.row(k / ms).transpose(),
                                       z_xi.row(kp / ms).transpose()) *
                             ks(is, k % ms) * ks(is, kp % ms);
        }
      }
    }
  }
  return out;
}

DenseModelState dense_state(const Matrix &mean, const Matrix &var,
                            const Matrix &z_xi, const Matrix &z_s,
                            const Matrix &x_s, const Spec &latent,
                            const Spec &spatial, double jit_xi, double jit_s,
                            double beta) {
  DenseModelState s;
  s.beta = beta;
  s.kuu = product_kernel(z_xi, z_s, z_xi, z_s, latent, spatial, jit_xi, jit_s);
  const DensePsi p = dense_psi(mean, var, z_xi, z_s, x_s, latent, spatial);
  s.psi0 = p.psi0;
  s.psi1 = p.psi1;
  s.psi2 = p.psi2;
  const Index m = s.kuu.rows();
  s.kpsi = s.kuu / beta + s.psi2;
  const Matrix l = s.kuu.llt().matrixL();
  const Matrix linv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(m, m));
  s.c = linv * s.psi2 * linv.transpose();
  s.a = s.c + Matrix::Identity(m, m) / beta;
  return s;
}

double dense_collapsed_bound(const DenseModelState &s, const Matrix &y, double kl) {
  const double n = static_cast<double>(y.rows());
  const double m = static_cast<double>(s.kuu.rows());
  const double dy = static_cast<double>(y.cols());
  const double beta = s.beta;
  const Matrix proj = s.psi1.transpose() * y;
  const double fit = (proj.transpose() * s.kpsi.llt().solve(proj)).trace();
  return 0.5 * dy * ((n - m) * std::log(beta) - n * std::log(2.0 * kPi) - logdet_spd(s.a)) -
         0.5 * beta * ((y * y.transpose()).trace() - fit + dy * (s.psi0 - s.c.trace())) - kl;
}

DenseQu dense_optimal_u(const DenseModelState &s, const Matrix &y) {
  const Matrix kpsi_inv = inv_spd(s.kpsi);
  DenseQu q;
  q.ubar = s.kuu * kpsi_inv * s.psi1.transpose() * y;
  q.sigma = s.kuu * kpsi_inv * s.kuu / s.beta;
  return q;
}

double dense_uncollapsed_bound(const DenseModelState &s, const Matrix &y,
                               const Matrix &ubar, const Matrix &sigma, double kl) {
  const double n = static_cast<double>(y.rows());
  const double m = static_cast<double>(s.kuu.rows());
  const double dy = static_cast<double>(y.cols());
  const double beta = s.beta;
  const Matrix kinv = inv_spd(s.kuu);
  const double kl_u =
      0.5 * (dy * ((kinv * sigma).trace() - m + logdet_spd(s.kuu) - logdet_spd(sigma)) +
             (ubar.transpose() * kinv * ubar).trace());
  return -0.5 * n * dy * (std::log(2.0 * kPi) - std::log(beta)) -
         0.5 * beta * (y * y.transpose()).trace() +
         beta * (ubar.transpose() * kinv * s.psi1.transpose() * y).trace() -
         0.5 * beta *
             (kinv * s.psi2 * kinv * (ubar * ubar.transpose() + dy * sigma)).trace() -
         0.5 * beta * dy * (s.psi0 - (kinv * s.psi2).trace()) - kl_u - kl;
}

double dense_test_bound(const DenseModelState &s, const DenseQu &qu,
                        const DensePsi &tp, const Matrix &y_star, double kl) {
  const double n = static_cast<double>(y_star.rows());
  const double dy = static_cast<double>(qu.ubar.cols());
  const double beta = s.beta;
  if (y_star.rows() == 0) return -kl;
  const Matrix kinv = inv_spd(s.kuu);
  return -0.5 * n * dy * (std::log(2.0 * kPi) - std::log(beta)) -
         0.5 * beta * (y_star * y_star.transpose()).trace() +
         beta * (qu.ubar.transpose() * kinv * tp.psi1.transpose() * y_star).trace() -
         0.5 * beta *
             (kinv * tp.psi2 * kinv * (qu.ubar * qu.ubar.transpose() + dy * qu.sigma))
                 .trace() -
         0.5 * beta * dy * (tp.psi0 - (kinv * tp.psi2).trace()) - kl;
}

MonteCarloPsi mc_psi(const Matrix &mean, const Matrix &var, const Matrix &z,
                     const Spec &spec, int n_samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = mean.rows(), m = z.rows(), d = mean.cols();
  Matrix s1 = Matrix::Zero(n, m), q1 = Matrix::Zero(n, m);
  Matrix s2 = Matrix::Zero(m, m), q2 = Matrix::Zero(m, m);
  Matrix x(n, d);
  for (int t = 0; t < n_samples; ++t) {
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < d; ++k) {
        x(i, k) = mean(i, k) + std::sqrt(var(i, k)) * normal(rng);
      }
    }
    const Matrix kfu = sgplvm::kernel_matrix(spec, x, z);
    const Matrix kk = kfu.transpose() * kfu;
    s1 += kfu;
    q1 += kfu.cwiseProduct(kfu);
    s2 += kk;
    q2 += kk.cwiseProduct(kk);
  }
  const double ns = static_cast<double>(n_samples);
  MonteCarloPsi out;
  out.psi1 = s1 / ns;
  out.psi2 = s2 / ns;
  const double denom = n_samples > 1 ? ns * (ns - 1.0) : 1.0;
  out.psi1_se = ((q1 / ns - out.psi1.cwiseProduct(out.psi1)).cwiseMax(0.0) * ns / denom)
                    .cwiseSqrt();
  out.psi2_se = ((q2 / ns - out.psi2.cwiseProduct(out.psi2)).cwiseMax(0.0) * ns / denom)
                    .cwiseSqrt();
  return out;
}

DensePrediction dense_predict(const DenseModelState &s, const Matrix &y,
                              const Matrix &k_star_u, const Matrix &k_star_star) {
  const Matrix kpsi_inv = inv_spd(s.kpsi);
  const Matrix kinv = inv_spd(s.kuu);
  DensePrediction p;
  p.mean = k_star_u * kpsi_inv * s.psi1.transpose() * y;
  p.cov = k_star_star - k_star_u * (kinv - kpsi_inv / s.beta) * k_star_u.transpose();
  p.var = p.cov.diagonal();
  return p;
}

double dense_gaussian_kl(const Vector &m0, const Matrix &s0, const Vector &m1,
                         const Matrix &s1) {
  const Matrix s1inv = inv_spd(s1);
  const Vector diff = m1 - m0;
  return 0.5 * ((s1inv * s0).trace() + diff.dot(s1inv * diff) -
                static_cast<double>(m0.size()) + logdet_spd(s1) - logdet_spd(s0));
}

double dense_kl_dynamical(const Matrix &mu, const Matrix &lambda, const Matrix &k) {
  const Matrix kinv = inv_spd(k);
  double total = 0.0;
  for (Index j = 0; j < mu.cols(); ++j) {
    Matrix prec = kinv;
    prec.diagonal() += lambda.col(j);
    const Matrix cov = inv_spd(prec);
    total += dense_gaussian_kl(k * mu.col(j), cov, Vector::Zero(mu.rows()), k);
  }
  return total;
}

}  // namespace oracle
