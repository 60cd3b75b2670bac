#include "sgplvm/latent.hpp"

#include <cmath>
#include <limits>

namespace sgplvm {

std::string to_string(LatentMode mode) {
  return mode == LatentMode::Iid ? "iid" : "dynamical";
}

LatentMode latent_mode_from_string(const std::string &name) {
  if (name == "iid") return LatentMode::Iid;
  if (name == "dynamical") return LatentMode::Dynamical;
  throw ConfigError("unknown latent prior '" + name + "'");
}

void VariationalLatent::validate() const {
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols()) {
    throw ShapeError("latent mean and log-variance shapes differ");
  }
  if (!mu.allFinite() || (log_var.array().isNaN()).any() ||
      (log_var.array() == std::numeric_limits<double>::infinity()).any()) {
    throw InputError("latent parameters must be finite");
  }
  if (mode == LatentMode::Dynamical) {
    if (timestamps.size() != mu.rows()) {
      throw InputError("dynamical latent posterior requires one timestamp per example");
    }
    for (Index i = 1; i < timestamps.size(); ++i) {
      if (!(timestamps(i) > timestamps(i - 1))) {
        throw InputError("timestamps must be strictly increasing");
      }
    }
  }
}

Matrix temporal_covariance(const Vector &t, const KernelSpec<double> &temporal,
                           double jitter) {
  Matrix x = t;
  Matrix k = kernel_matrix(temporal, x);
  k.diagonal().array() += jitter * temporal.variance;
  return k;
}

Vector temporal_hyper_contract(const Vector &t, const KernelSpec<double> &temporal,
                               double jitter, const Matrix &g) {
  Matrix x = t;
  Vector out = kernel_hyper_contract(temporal, x, g);
  out(0) += jitter * temporal.variance * g.trace();
  return out;
}

namespace {

// Quantities shared by the dynamical marginals and their gradients for one
// latent dimension: B = I + S K S with S = Lambda^{1/2}, N = S B^{-1} S and
// the posterior covariance K - K N K.
struct DynamicalBlock {
  Matrix n;
  Matrix cov;
};

DynamicalBlock dynamical_block(const Matrix &k, const Vector &log_lambda) {
  const Index n = k.rows();
  const Vector s = (0.5 * log_lambda.array()).exp();
  Matrix b = s.asDiagonal() * k * s.asDiagonal();
  b.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(b);
  if (llt.info() != Eigen::Success) {
    throw DecompositionError("temporal covariance is not positive semi-definite");
  }
  Matrix sd = s.asDiagonal() * Matrix::Identity(n, n);
  DynamicalBlock out;
  out.n = s.asDiagonal() * llt.solve(sd);
  out.cov = k - k * out.n * k;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

}  // namespace

LatentMarginals latent_marginals(const VariationalLatent &q,
                                 const KernelSpec<double> *temporal,
                                 double jitter) {
  q.validate();
  LatentMarginals out;
  if (q.mode == LatentMode::Iid) {
    out.mean = q.mu;
    out.var = q.log_var.array().exp();
    return out;
  }
  if (temporal == nullptr) {
    throw InputError("dynamical latent posterior requires a temporal kernel");
  }
  const Matrix k = temporal_covariance(q.timestamps, *temporal, jitter);
  out.mean = k * q.mu;
  out.var.resize(q.size(), q.dim());
  for (Index j = 0; j < q.dim(); ++j) {
    const auto blk = dynamical_block(k, q.log_var.col(j));
    out.var.col(j) = blk.cov.diagonal().cwiseMax(0.0);
  }
  return out;
}

LatentGradient latent_marginals_backward(const VariationalLatent &q,
                                         const KernelSpec<double> *temporal,
                                         double jitter, const Matrix &g_mean,
                                         const Matrix &g_var) {
  LatentGradient out;
  if (q.mode == LatentMode::Iid) {
    out.mu = g_mean;
    out.log_var = g_var.cwiseProduct(q.log_var.array().exp().matrix());
    return out;
  }
  const Index n = q.size();
  const Matrix k = temporal_covariance(q.timestamps, *temporal, jitter);
  Matrix g_k = g_mean * q.mu.transpose();
  out.mu = k * g_mean;
  out.log_var.resize(n, q.dim());
  for (Index j = 0; j < q.dim(); ++j) {
    const auto blk = dynamical_block(k, q.log_var.col(j));
    // d cov = P^T dK P with P = I - N K; d cov = -cov dLambda cov.
    const Matrix p = Matrix::Identity(n, n) - blk.n * k;
    g_k += p * g_var.col(j).asDiagonal() * p.transpose();
    const Vector lambda = q.log_var.col(j).array().exp();
    for (Index i = 0; i < n; ++i) {
      out.log_var(i, j) =
          -lambda(i) * (blk.cov.col(i).array().square() * g_var.col(j).array()).sum();
    }
  }
  out.temporal_log_hyper = temporal_hyper_contract(q.timestamps, *temporal, jitter, g_k);
  return out;
}

}  // namespace sgplvm
