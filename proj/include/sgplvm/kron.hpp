#pragma once

// Kronecker-product linear algebra on factored matrices. The represented
// matrix A_1 (x) ... (x) A_k is never materialized except by dense(), which
// exists for tests and small diagnostics.
//
// Index convention: row r of a Kronecker-structured vector maps to the
// multi-index (i_1, ..., i_k) with i_k varying fastest, i.e. the vector is the
// row-major flattening of a tensor with dimensions (rows_1, ..., rows_k).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sgplvm/errors.hpp"

namespace sgplvm {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMat =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;
using Index = Eigen::Index;

template <typename Scalar = double>
class KronMatrix {
 public:
  KronMatrix() = default;

  explicit KronMatrix(std::vector<Mat<Scalar>> factors)
      : factors_(std::move(factors)) {
    if (factors_.empty()) {
      throw ShapeError("KronMatrix requires at least one factor");
    }
  }

  KronMatrix(std::initializer_list<Mat<Scalar>> factors)
      : KronMatrix(std::vector<Mat<Scalar>>(factors)) {}

  std::size_t num_factors() const { return factors_.size(); }
  const Mat<Scalar> &factor(std::size_t i) const { return factors_.at(i); }
  Mat<Scalar> &factor(std::size_t i) { return factors_.at(i); }
  const std::vector<Mat<Scalar>> &factors() const { return factors_; }

  Index rows() const {
    Index r = 1;
    for (const auto &f : factors_) r *= f.rows();
    return r;
  }

  Index cols() const {
    Index c = 1;
    for (const auto &f : factors_) c *= f.cols();
    return c;
  }

  bool is_square() const {
    for (const auto &f : factors_) {
      if (f.rows() != f.cols()) return false;
    }
    return true;
  }

  Mat<Scalar> dense() const {
    Mat<Scalar> out = factors_.front();
    for (std::size_t i = 1; i < factors_.size(); ++i) {
      const auto &f = factors_[i];
      Mat<Scalar> next(out.rows() * f.rows(), out.cols() * f.cols());
      for (Index a = 0; a < out.rows(); ++a) {
        for (Index b = 0; b < out.cols(); ++b) {
          next.block(a * f.rows(), b * f.cols(), f.rows(), f.cols()) =
              out(a, b) * f;
        }
      }
      out = std::move(next);
    }
    return out;
  }

 private:
  std::vector<Mat<Scalar>> factors_;
};

template <typename Scalar = double>
struct KronEig {
  std::vector<Mat<Scalar>> q_factors;
  std::vector<Vec<Scalar>> lambda_factors;

  // Eigenvalues of the full product, in Kronecker order.
  Vec<Scalar> eigenvalues() const {
    Vec<Scalar> out = Vec<Scalar>::Ones(1);
    for (const auto &lam : lambda_factors) {
      Vec<Scalar> next(out.size() * lam.size());
      for (Index a = 0; a < out.size(); ++a) {
        next.segment(a * lam.size(), lam.size()) = out(a) * lam;
      }
      out = std::move(next);
    }
    return out;
  }

  KronMatrix<Scalar> eigenvectors() const { return KronMatrix<Scalar>(q_factors); }

  Mat<Scalar> reconstruct_factor(std::size_t i) const {
    return q_factors.at(i) * lambda_factors.at(i).asDiagonal() *
           q_factors.at(i).transpose();
  }
};

// beta^{-1} I + diag(lambda products): the only m x m quantity the bound keeps.
template <typename Scalar = double>
struct DiagPlusConst {
  Vec<Scalar> diag;
  Scalar constant = Scalar(0);

  DiagPlusConst() = default;
  DiagPlusConst(Vec<Scalar> d, Scalar c) : diag(std::move(d)), constant(c) {
    for (Index i = 0; i < diag.size(); ++i) {
      if (!(constant + diag(i) > Scalar(0))) {
        throw NumericError("DiagPlusConst: entry " + std::to_string(i) +
                           " is not strictly positive");
      }
    }
  }

  Vec<Scalar> values() const { return diag.array() + constant; }
  Vec<Scalar> inverse() const { return values().cwiseInverse(); }
  Scalar log_det() const { return values().array().log().sum(); }
};

namespace detail {

// Applies op_i along mode i of the row-major tensor stored in `data`, for
// every factor in turn. op_i maps a (cols_i x right) block to a
// (rows_i x right) block.
template <typename Scalar, typename Op>
Vec<Scalar> apply_modes(std::vector<Index> dims, const Vec<Scalar> &data,
                        const std::vector<Index> &out_dims, Op &&op) {
  Vec<Scalar> cur = data;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    Index left = 1;
    for (std::size_t j = 0; j < i; ++j) left *= dims[j];
    Index right = 1;
    for (std::size_t j = i + 1; j < dims.size(); ++j) right *= dims[j];
    const Index mid_in = dims[i];
    const Index mid_out = out_dims[i];
    Vec<Scalar> next(left * mid_out * right);
    for (Index l = 0; l < left; ++l) {
      Eigen::Map<const RowMat<Scalar>> in(cur.data() + l * mid_in * right,
                                          mid_in, right);
      Eigen::Map<RowMat<Scalar>> out(next.data() + l * mid_out * right,
                                     mid_out, right);
      out = op(i, in);
    }
    cur = std::move(next);
    dims[i] = mid_out;
  }
  return cur;
}

template <typename Scalar>
Scalar mean_diagonal(const Mat<Scalar> &a) {
  return a.diagonal().mean();
}

}  // namespace detail

template <typename Scalar>
Vec<Scalar> kron_matvec(const KronMatrix<Scalar> &k, const Vec<Scalar> &v) {
  if (v.size() != k.cols()) {
    throw ShapeError("kron_matvec: vector length " + std::to_string(v.size()) +
                     " does not match column count " + std::to_string(k.cols()));
  }
  std::vector<Index> in_dims, out_dims;
  for (const auto &f : k.factors()) {
    in_dims.push_back(f.cols());
    out_dims.push_back(f.rows());
  }
  return detail::apply_modes<Scalar>(
      in_dims, v, out_dims, [&](std::size_t i, const auto &block) {
        return RowMat<Scalar>(k.factor(i) * block);
      });
}

template <typename Scalar>
Mat<Scalar> kron_matmat(const KronMatrix<Scalar> &k, const Mat<Scalar> &m) {
  if (m.rows() != k.cols()) {
    throw ShapeError("kron_matmat: matrix has " + std::to_string(m.rows()) +
                     " rows, expected " + std::to_string(k.cols()));
  }
  Mat<Scalar> out(k.rows(), m.cols());
  for (Index c = 0; c < m.cols(); ++c) {
    out.col(c) = kron_matvec<Scalar>(k, m.col(c));
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> kron_transpose_matmat(const KronMatrix<Scalar> &k,
                                  const Mat<Scalar> &m) {
  std::vector<Mat<Scalar>> t;
  for (const auto &f : k.factors()) t.push_back(f.transpose());
  return kron_matmat<Scalar>(KronMatrix<Scalar>(std::move(t)), m);
}

template <typename Scalar = double>
struct KronCholesky {
  KronMatrix<Scalar> factor;
  std::vector<Scalar> jitter;  // jitter actually added to each factor
};

// Cholesky of a single symmetric matrix with jitter escalation: `jitter` is
// tried first, then 1e-8 x mean diagonal growing tenfold up to 1e-2 x mean
// diagonal.
template <typename Scalar>
std::pair<Mat<Scalar>, Scalar> jittered_cholesky(const Mat<Scalar> &a,
                                                 Scalar jitter,
                                                 const std::string &name) {
  if (a.rows() != a.cols()) {
    throw ShapeError("cholesky of " + name + ": matrix is not square");
  }
  if (jitter < Scalar(0)) {
    throw InputError("cholesky of " + name + ": negative jitter");
  }
  const Scalar scale = std::abs(detail::mean_diagonal(a));
  const Scalar max_jitter = Scalar(1e-2) * scale;
  Scalar j = jitter;
  const Index n = a.rows();
  while (true) {
    Mat<Scalar> shifted = a;
    shifted.diagonal().array() += j;
    Eigen::LLT<Mat<Scalar>> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Mat<Scalar> l = llt.matrixL();
      if ((l.diagonal().array() > Scalar(0)).all() && l.allFinite()) {
        return {l, j};
      }
    }
    Scalar next = std::max(j * Scalar(10), Scalar(1e-8) * scale);
    if (!(scale > Scalar(0)) || next > max_jitter * Scalar(1.0000001) ||
        n == 0) {
      throw DecompositionError("cholesky of " + name +
                               ": not positive definite after jitter " +
                               std::to_string(static_cast<double>(j)));
    }
    j = next;
  }
}

template <typename Scalar>
KronCholesky<Scalar> factored_cholesky_detailed(const KronMatrix<Scalar> &k,
                                                Scalar jitter) {
  std::vector<Mat<Scalar>> ls;
  std::vector<Scalar> used;
  for (std::size_t i = 0; i < k.num_factors(); ++i) {
    const auto &f = k.factor(i);
    if (f.size() > 0 && (f - f.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-8)) {
      throw InputError("factored_cholesky: factor " + std::to_string(i) +
                       " is not symmetric");
    }
    auto [l, j] = jittered_cholesky<Scalar>(f, jitter,
                                            "factor " + std::to_string(i));
    ls.push_back(std::move(l));
    used.push_back(j);
  }
  return {KronMatrix<Scalar>(std::move(ls)), std::move(used)};
}

template <typename Scalar>
KronMatrix<Scalar> factored_cholesky(const KronMatrix<Scalar> &k,
                                     Scalar jitter) {
  return factored_cholesky_detailed<Scalar>(k, jitter).factor;
}

template <typename Scalar>
KronEig<Scalar> factored_eig_sym(const KronMatrix<Scalar> &k) {
  KronEig<Scalar> out;
  for (std::size_t i = 0; i < k.num_factors(); ++i) {
    const auto &f = k.factor(i);
    if (f.rows() != f.cols()) {
      throw ShapeError("factored_eig_sym: factor " + std::to_string(i) +
                       " is not square");
    }
    if (f.size() > 0 && (f - f.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-8)) {
      throw InputError("factored_eig_sym: factor " + std::to_string(i) +
                       " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(f);
    if (es.info() != Eigen::Success) {
      throw DecompositionError("factored_eig_sym: eigensolver failed on factor " +
                               std::to_string(i));
    }
    out.q_factors.push_back(es.eigenvectors());
    out.lambda_factors.push_back(es.eigenvalues());
  }
  return out;
}

// Solves (L_1 (x) ... (x) L_k) X = B one factor at a time.
template <typename Scalar>
Mat<Scalar> kron_tri_solve(const KronMatrix<Scalar> &l, const Mat<Scalar> &b) {
  if (!l.is_square()) throw ShapeError("kron_tri_solve: factors must be square");
  if (b.rows() != l.rows()) {
    throw ShapeError("kron_tri_solve: right-hand side has " +
                     std::to_string(b.rows()) + " rows, expected " +
                     std::to_string(l.rows()));
  }
  std::vector<Index> dims;
  for (std::size_t i = 0; i < l.num_factors(); ++i) {
    const auto &f = l.factor(i);
    for (Index d = 0; d < f.rows(); ++d) {
      if (f(d, d) == Scalar(0)) {
        throw SingularError("kron_tri_solve: zero diagonal in factor " +
                            std::to_string(i));
      }
    }
    dims.push_back(f.rows());
  }
  Mat<Scalar> out(b.rows(), b.cols());
  for (Index c = 0; c < b.cols(); ++c) {
    out.col(c) = detail::apply_modes<Scalar>(
        dims, b.col(c), dims, [&](std::size_t i, const auto &block) {
          return RowMat<Scalar>(
              l.factor(i).template triangularView<Eigen::Lower>().solve(block));
        });
  }
  return out;
}

template <typename Scalar>
Vec<Scalar> kron_diag(const KronMatrix<Scalar> &k) {
  if (!k.is_square()) throw ShapeError("kron_diag: factors must be square");
  Vec<Scalar> out = Vec<Scalar>::Ones(1);
  for (const auto &f : k.factors()) {
    Vec<Scalar> d = f.diagonal();
    Vec<Scalar> next(out.size() * d.size());
    for (Index a = 0; a < out.size(); ++a) {
      next.segment(a * d.size(), d.size()) = out(a) * d;
    }
    out = std::move(next);
  }
  return out;
}

// log det of the product of SPD factors given their Cholesky factors:
// sum_i (m / m_i) log det K_i.
template <typename Scalar>
Scalar kron_logdet_from_cholesky(const KronMatrix<Scalar> &l) {
  const Scalar m = static_cast<Scalar>(l.rows());
  Scalar out = 0;
  for (const auto &f : l.factors()) {
    const Scalar mi = static_cast<Scalar>(f.rows());
    out += (m / mi) * Scalar(2) * f.diagonal().array().log().sum();
  }
  return out;
}

}  // namespace sgplvm
