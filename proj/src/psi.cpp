#include "sgplvm/psi.hpp"

#include <cmath>

namespace sgplvm {

namespace {

void check(const LatentMarginals &q, const Matrix &z,
           const KernelSpec<double> &spec) {
  if (spec.family != KernelFamily::ArdRbf) {
    throw InputError("psi statistics require an ard_rbf latent kernel");
  }
  if (q.mean.rows() != q.var.rows() || q.mean.cols() != q.var.cols()) {
    throw ShapeError("latent marginal mean and variance shapes differ");
  }
  if (z.cols() != q.mean.cols()) {
    throw ShapeError("inducing inputs have " + std::to_string(z.cols()) +
                     " columns, latent dimension is " +
                     std::to_string(q.mean.cols()));
  }
  spec.validate(q.mean.cols());
  if (!q.mean.allFinite() || !q.var.allFinite() || (q.var.array() < 0.0).any()) {
    throw InputError("latent marginal variances must be finite and nonnegative");
  }
}

// Index of the log-lengthscale slot that dimension d contributes to.
Index ls_slot(const KernelSpec<double> &spec, Index d) {
  return 1 + (spec.lengthscales.size() == 1 ? 0 : d);
}

}  // namespace

double psi0_rbf(const LatentMarginals &q, const KernelSpec<double> &spec) {
  spec.validate(q.mean.cols());
  return static_cast<double>(q.mean.rows()) * spec.variance;
}

Matrix psi1_rbf(const LatentMarginals &q, const Matrix &z,
                const KernelSpec<double> &spec) {
  check(q, z, spec);
  const Index n = q.mean.rows(), m = z.rows(), dim = z.cols();
  Matrix out(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < m; ++k) {
      double log_term = 0.0;
      for (Index d = 0; d < dim; ++d) {
        const double l2 = spec.lengthscale(d) * spec.lengthscale(d);
        const double s = l2 + q.var(i, d);
        const double diff = q.mean(i, d) - z(k, d);
        log_term += -0.5 * std::log(s / l2) - 0.5 * diff * diff / s;
      }
      out(i, k) = spec.variance * std::exp(log_term);
    }
  }
  return out;
}

Matrix psi2_rbf(const LatentMarginals &q, const Matrix &z,
                const KernelSpec<double> &spec) {
  check(q, z, spec);
  const Index n = q.mean.rows(), m = z.rows(), dim = z.cols();
  const double s4 = spec.variance * spec.variance;
  Matrix out = Matrix::Zero(m, m);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < m; ++k) {
      for (Index kp = k; kp < m; ++kp) {
        double log_term = 0.0;
        for (Index d = 0; d < dim; ++d) {
          const double l2 = spec.lengthscale(d) * spec.lengthscale(d);
          const double t = l2 + 2.0 * q.var(i, d);
          const double dz = z(k, d) - z(kp, d);
          const double diff = q.mean(i, d) - 0.5 * (z(k, d) + z(kp, d));
          log_term += -0.5 * std::log(t / l2) - dz * dz / (4.0 * l2) - diff * diff / t;
        }
        out(k, kp) += s4 * std::exp(log_term);
      }
    }
  }
  for (Index k = 0; k < m; ++k) {
    for (Index kp = k + 1; kp < m; ++kp) out(kp, k) = out(k, kp);
  }
  return out;
}

PsiSet psi_rbf(const LatentMarginals &q, const Matrix &z,
               const KernelSpec<double> &spec) {
  return {psi0_rbf(q, spec), psi1_rbf(q, z, spec), psi2_rbf(q, z, spec)};
}

PsiGradient psi_rbf_backward(const LatentMarginals &q, const Matrix &z,
                             const KernelSpec<double> &spec, double g_psi0,
                             const Matrix &g_psi1, const Matrix &g_psi2) {
  check(q, z, spec);
  const Index n = q.mean.rows(), m = z.rows(), dim = z.cols();
  PsiGradient g;
  g.mean = Matrix::Zero(n, dim);
  g.var = Matrix::Zero(n, dim);
  g.z = Matrix::Zero(m, dim);
  g.log_hyper = Vector::Zero(spec.num_hyper());

  g.log_hyper(0) += g_psi0 * static_cast<double>(n) * spec.variance;

  if (g_psi1.size() > 0) {
    if (g_psi1.rows() != n || g_psi1.cols() != m) {
      throw ShapeError("psi1 gradient has wrong shape");
    }
    const Matrix psi1 = psi1_rbf(q, z, spec);
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < m; ++k) {
        const double w = g_psi1(i, k) * psi1(i, k);
        if (w == 0.0) continue;
        g.log_hyper(0) += w;
        for (Index d = 0; d < dim; ++d) {
          const double l2 = spec.lengthscale(d) * spec.lengthscale(d);
          const double s = l2 + q.var(i, d);
          const double diff = q.mean(i, d) - z(k, d);
          g.mean(i, d) -= w * diff / s;
          g.z(k, d) += w * diff / s;
          g.var(i, d) += w * (-0.5 / s + 0.5 * diff * diff / (s * s));
          g.log_hyper(ls_slot(spec, d)) +=
              w * (1.0 - l2 / s + l2 * diff * diff / (s * s));
        }
      }
    }
  }

  if (g_psi2.size() > 0) {
    if (g_psi2.rows() != m || g_psi2.cols() != m) {
      throw ShapeError("psi2 gradient has wrong shape");
    }
    const double s4 = spec.variance * spec.variance;
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < m; ++k) {
        for (Index kp = 0; kp < m; ++kp) {
          const double gkk = g_psi2(k, kp);
          if (gkk == 0.0) continue;
          double log_term = 0.0;
          for (Index d = 0; d < dim; ++d) {
            const double l2 = spec.lengthscale(d) * spec.lengthscale(d);
            const double t = l2 + 2.0 * q.var(i, d);
            const double dz = z(k, d) - z(kp, d);
            const double diff = q.mean(i, d) - 0.5 * (z(k, d) + z(kp, d));
            log_term += -0.5 * std::log(t / l2) - dz * dz / (4.0 * l2) - diff * diff / t;
          }
          const double w = gkk * s4 * std::exp(log_term);
          g.log_hyper(0) += 2.0 * w;
          for (Index d = 0; d < dim; ++d) {
            const double l2 = spec.lengthscale(d) * spec.lengthscale(d);
            const double t = l2 + 2.0 * q.var(i, d);
            const double dz = z(k, d) - z(kp, d);
            const double diff = q.mean(i, d) - 0.5 * (z(k, d) + z(kp, d));
            g.mean(i, d) -= w * 2.0 * diff / t;
            g.var(i, d) += w * (-1.0 / t + 2.0 * diff * diff / (t * t));
            g.log_hyper(ls_slot(spec, d)) +=
                w * (1.0 - l2 / t + dz * dz / (2.0 * l2) +
                     2.0 * l2 * diff * diff / (t * t));
            g.z(k, d) += w * (-dz / (2.0 * l2) + diff / t);
            g.z(kp, d) += w * (dz / (2.0 * l2) + diff / t);
          }
        }
      }
    }
  }
  return g;
}

StructuredPsiSet structured_psi(const LatentMarginals &q, const Matrix &z_xi,
                                const Matrix &z_s, const Matrix &x_s,
                                const KernelSpec<double> &latent_spec,
                                const KernelSpec<double> &spatial_spec,
                                bool z_s_tied) {
  StructuredPsiSet out;
  out.latent = psi_rbf(q, z_xi, latent_spec);
  out.spatial_trace = kernel_diag(spatial_spec, x_s).sum();
  out.k_fu_s = z_s_tied ? kernel_matrix(spatial_spec, x_s)
                        : kernel_matrix(spatial_spec, x_s, z_s);
  out.k_uf_k_fu_s = out.k_fu_s.transpose() * out.k_fu_s;
  return out;
}

}  // namespace sgplvm
