#pragma once

// Stationary covariance functions and their hyperparameter / input
// derivatives. Hyperparameters are differentiated in log space, ordered as
// [log variance, log lengthscale_1, ..., log lengthscale_p].

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "sgplvm/errors.hpp"
#include "sgplvm/kron.hpp"

namespace sgplvm {

enum class KernelFamily { ArdRbf, Matern32, White };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string &name);

template <typename Scalar = double>
struct KernelSpec {
  KernelFamily family = KernelFamily::ArdRbf;
  Scalar variance = Scalar(1);
  // One entry per input dimension, or a single entry shared by all dimensions.
  Vec<Scalar> lengthscales = Vec<Scalar>::Ones(1);

  Index num_hyper() const {
    return family == KernelFamily::White ? 1 : 1 + lengthscales.size();
  }

  Scalar lengthscale(Index d) const {
    return lengthscales.size() == 1 ? lengthscales(0) : lengthscales(d);
  }

  void validate(Index input_dim) const {
    if (!(variance > Scalar(0))) {
      throw InputError("kernel variance must be positive");
    }
    if (family == KernelFamily::White) return;
    if (lengthscales.size() != 1 && lengthscales.size() != input_dim) {
      throw ShapeError("kernel has " + std::to_string(lengthscales.size()) +
                       " lengthscales for " + std::to_string(input_dim) +
                       "-dimensional inputs");
    }
    if (!(lengthscales.array() > Scalar(0)).all()) {
      throw InputError("kernel lengthscales must be positive");
    }
  }

  Vec<Scalar> log_hyper() const {
    Vec<Scalar> out(num_hyper());
    out(0) = std::log(variance);
    if (family != KernelFamily::White) {
      out.tail(lengthscales.size()) = lengthscales.array().log();
    }
    return out;
  }

  void set_log_hyper(const Vec<Scalar> &h) {
    if (h.size() != num_hyper()) throw ShapeError("set_log_hyper: wrong size");
    variance = std::exp(h(0));
    if (family != KernelFamily::White) {
      lengthscales = h.tail(lengthscales.size()).array().exp();
    }
  }
};

namespace detail {

inline constexpr double kSqrt3 = 1.7320508075688772;

template <typename Scalar>
void check_inputs(const KernelSpec<Scalar> &spec, const Mat<Scalar> &x1,
                  const Mat<Scalar> &x2) {
  if (x1.cols() != x2.cols()) {
    throw ShapeError("kernel inputs have " + std::to_string(x1.cols()) +
                     " and " + std::to_string(x2.cols()) + " columns");
  }
  spec.validate(x1.cols());
}

// Squared scaled distance sum_d (a_d - b_d)^2 / l_d^2.
template <typename Scalar, typename A, typename B>
Scalar scaled_sqdist(const KernelSpec<Scalar> &spec, const A &a, const B &b) {
  Scalar r2 = 0;
  for (Index d = 0; d < a.size(); ++d) {
    const Scalar diff = (a(d) - b(d)) / spec.lengthscale(d);
    r2 += diff * diff;
  }
  return r2;
}

template <typename Scalar, typename A, typename B>
Scalar kernel_value(const KernelSpec<Scalar> &spec, const A &a, const B &b) {
  switch (spec.family) {
    case KernelFamily::ArdRbf:
      return spec.variance * std::exp(Scalar(-0.5) * scaled_sqdist(spec, a, b));
    case KernelFamily::Matern32: {
      const Scalar r = std::sqrt(scaled_sqdist(spec, a, b));
      const Scalar s = Scalar(kSqrt3) * r;
      return spec.variance * (Scalar(1) + s) * std::exp(-s);
    }
    case KernelFamily::White:
      return (a - b).cwiseAbs().maxCoeff() == Scalar(0) ? spec.variance
                                                        : Scalar(0);
  }
  return Scalar(0);
}

}  // namespace detail

// K[i, j] = k(x1_i, x2_j). The white kernel is sigma^2 when the two inputs
// coincide exactly and zero otherwise.
template <typename Scalar>
Mat<Scalar> kernel_matrix(const KernelSpec<Scalar> &spec, const Mat<Scalar> &x1,
                          const Mat<Scalar> &x2) {
  detail::check_inputs(spec, x1, x2);
  Mat<Scalar> k(x1.rows(), x2.rows());
  for (Index j = 0; j < x2.rows(); ++j) {
    for (Index i = 0; i < x1.rows(); ++i) {
      k(i, j) = detail::kernel_value(spec, x1.row(i), x2.row(j));
    }
  }
  return k;
}

// Self-covariance: exactly symmetric, and the white kernel gives sigma^2 I by
// row index even when rows repeat.
template <typename Scalar>
Mat<Scalar> kernel_matrix(const KernelSpec<Scalar> &spec, const Mat<Scalar> &x) {
  detail::check_inputs(spec, x, x);
  const Index n = x.rows();
  if (spec.family == KernelFamily::White) {
    return spec.variance * Mat<Scalar>::Identity(n, n);
  }
  Mat<Scalar> k(n, n);
  for (Index j = 0; j < n; ++j) {
    k(j, j) = spec.variance;
    for (Index i = j + 1; i < n; ++i) {
      k(i, j) = detail::kernel_value(spec, x.row(i), x.row(j));
      k(j, i) = k(i, j);
    }
  }
  return k;
}

template <typename Scalar>
Vec<Scalar> kernel_diag(const KernelSpec<Scalar> &spec, const Mat<Scalar> &x) {
  spec.validate(x.cols());
  return Vec<Scalar>::Constant(x.rows(), spec.variance);
}

namespace detail {

// dk/d(log l_d) divided by (a_d - b_d)^2 / l_d^2, i.e. the common radial
// factor shared by every lengthscale derivative.
template <typename Scalar, typename A, typename B>
Scalar radial_factor(const KernelSpec<Scalar> &spec, const A &a, const B &b) {
  switch (spec.family) {
    case KernelFamily::ArdRbf:
      return spec.variance * std::exp(Scalar(-0.5) * scaled_sqdist(spec, a, b));
    case KernelFamily::Matern32: {
      const Scalar r = std::sqrt(scaled_sqdist(spec, a, b));
      return Scalar(3) * spec.variance * std::exp(-Scalar(kSqrt3) * r);
    }
    case KernelFamily::White:
      return Scalar(0);
  }
  return Scalar(0);
}

}  // namespace detail

// dK/d(log theta) for each hyperparameter, in log_hyper() order.
template <typename Scalar>
std::vector<Mat<Scalar>> kernel_grad_hyper(const KernelSpec<Scalar> &spec,
                                           const Mat<Scalar> &x1,
                                           const Mat<Scalar> &x2) {
  detail::check_inputs(spec, x1, x2);
  std::vector<Mat<Scalar>> out;
  out.push_back(kernel_matrix(spec, x1, x2));
  if (spec.family == KernelFamily::White) {
    return out;
  }
  const Index p = spec.lengthscales.size();
  for (Index q = 0; q < p; ++q) out.push_back(Mat<Scalar>::Zero(x1.rows(), x2.rows()));
  for (Index j = 0; j < x2.rows(); ++j) {
    for (Index i = 0; i < x1.rows(); ++i) {
      const Scalar f = detail::radial_factor(spec, x1.row(i), x2.row(j));
      for (Index d = 0; d < x1.cols(); ++d) {
        const Scalar l = spec.lengthscale(d);
        const Scalar diff = x1(i, d) - x2(j, d);
        out[1 + (p == 1 ? 0 : d)](i, j) += f * diff * diff / (l * l);
      }
    }
  }
  return out;
}

template <typename Scalar>
std::vector<Mat<Scalar>> kernel_grad_hyper(const KernelSpec<Scalar> &spec,
                                           const Mat<Scalar> &x) {
  auto out = kernel_grad_hyper(spec, x, x);
  out[0] = kernel_matrix(spec, x);
  return out;
}

// sum_ij G_ij dK_ij/d(log theta) without forming the derivative matrices.
template <typename Scalar>
Vec<Scalar> kernel_hyper_contract(const KernelSpec<Scalar> &spec,
                                  const Mat<Scalar> &x1, const Mat<Scalar> &x2,
                                  const Mat<Scalar> &g) {
  detail::check_inputs(spec, x1, x2);
  if (g.rows() != x1.rows() || g.cols() != x2.rows()) {
    throw ShapeError("kernel_hyper_contract: gradient shape mismatch");
  }
  Vec<Scalar> out = Vec<Scalar>::Zero(spec.num_hyper());
  const Index p = spec.family == KernelFamily::White ? 0 : spec.lengthscales.size();
  for (Index j = 0; j < x2.rows(); ++j) {
    for (Index i = 0; i < x1.rows(); ++i) {
      const Scalar gij = g(i, j);
      if (gij == Scalar(0)) continue;
      out(0) += gij * detail::kernel_value(spec, x1.row(i), x2.row(j));
      if (p == 0) continue;
      const Scalar f = gij * detail::radial_factor(spec, x1.row(i), x2.row(j));
      for (Index d = 0; d < x1.cols(); ++d) {
        const Scalar l = spec.lengthscale(d);
        const Scalar diff = x1(i, d) - x2(j, d);
        out(1 + (p == 1 ? 0 : d)) += f * diff * diff / (l * l);
      }
    }
  }
  return out;
}

template <typename Scalar>
Vec<Scalar> kernel_hyper_contract(const KernelSpec<Scalar> &spec,
                                  const Mat<Scalar> &x, const Mat<Scalar> &g) {
  if (spec.family == KernelFamily::White) {
    spec.validate(x.cols());
    if (g.rows() != x.rows() || g.cols() != x.rows()) {
      throw ShapeError("kernel_hyper_contract: gradient shape mismatch");
    }
    return Vec<Scalar>::Constant(1, spec.variance * g.trace());
  }
  return kernel_hyper_contract(spec, x, x, g);
}

// Gradients of sum_ij G_ij k(x1_i, x2_j) with respect to x1 and x2.
template <typename Scalar>
std::pair<Mat<Scalar>, Mat<Scalar>> kernel_input_contract(
    const KernelSpec<Scalar> &spec, const Mat<Scalar> &x1,
    const Mat<Scalar> &x2, const Mat<Scalar> &g) {
  detail::check_inputs(spec, x1, x2);
  Mat<Scalar> g1 = Mat<Scalar>::Zero(x1.rows(), x1.cols());
  Mat<Scalar> g2 = Mat<Scalar>::Zero(x2.rows(), x2.cols());
  if (spec.family == KernelFamily::White) return {g1, g2};
  for (Index j = 0; j < x2.rows(); ++j) {
    for (Index i = 0; i < x1.rows(); ++i) {
      const Scalar gij = g(i, j);
      if (gij == Scalar(0)) continue;
      // dk/da_d = -radial_factor * (a_d - b_d) / l_d^2
      const Scalar f = gij * detail::radial_factor(spec, x1.row(i), x2.row(j));
      for (Index d = 0; d < x1.cols(); ++d) {
        const Scalar l = spec.lengthscale(d);
        const Scalar v = -f * (x1(i, d) - x2(j, d)) / (l * l);
        g1(i, d) += v;
        g2(j, d) -= v;
      }
    }
  }
  return {g1, g2};
}

// Gradient of sum_ij G_ij k(x_i, x_j) with respect to x (self-covariance).
template <typename Scalar>
Mat<Scalar> kernel_input_contract(const KernelSpec<Scalar> &spec,
                                  const Mat<Scalar> &x, const Mat<Scalar> &g) {
  auto [g1, g2] = kernel_input_contract(spec, x, x, g);
  return g1 + g2;
}

}  // namespace sgplvm
