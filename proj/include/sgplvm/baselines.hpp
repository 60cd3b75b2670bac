#pragma once

// Reference regressors the SGPLVM is compared against: an independent GP
// per image over pixel coordinates, and a separable space-time GP over a
// video. Both fit their kernel hyperparameters and noise by maximizing the
// exact log marginal likelihood.

#include "sgplvm/kernels.hpp"
#include "sgplvm/optim.hpp"

namespace sgplvm {

struct GpFitOptions {
  int max_iters = 200;
  double tolerance = 1e-8;
  double init_lengthscale = 2.0;
  double init_noise_ratio = 0.1;  // noise variance as a fraction of the data variance
};

struct GpRegression {
  KernelSpec<double> kernel;
  double noise_var = 0.0;
  Matrix x;
  Vector y;
  double offset = 0.0;  // constant mean
  Matrix chol;
  Vector alpha;
  double log_marginal = 0.0;

  // Mean and latent variance (noise excluded) at new inputs.
  std::pair<Vector, Vector> predict(const Matrix &x_star) const;
};

double gp_log_marginal(const KernelSpec<double> &k, double noise_var, const Matrix &x,
                       const Vector &y, Vector *grad_log_params = nullptr);

GpRegression fit_gp_regression(const Matrix &x, const Vector &y, KernelFamily family,
                               const GpFitOptions &opt = {});

// Separable GP on a (time x space) grid: k((t,s),(t',s')) = k_t(t,t') k_s(s,s')
// plus white noise. y is ordered time-major with the spatial index fastest.
struct SpaceTimeGp {
  KernelSpec<double> temporal;
  KernelSpec<double> spatial;
  double noise_var = 0.0;
  Vector t;
  Matrix x_s;
  double offset = 0.0;
  Matrix q_t, q_s;
  Vector lam_t, lam_s;
  Matrix alpha;  // n_t x n_s
  double log_marginal = 0.0;

  // Mean and latent variance at new times on the training spatial inputs,
  // time-major like the training data.
  std::pair<Vector, Vector> predict(const Vector &t_star) const;
};

double space_time_log_marginal(const KernelSpec<double> &kt, const KernelSpec<double> &ks,
                               double noise_var, const Vector &t, const Matrix &x_s,
                               const Vector &y, Vector *grad_log_params = nullptr);

SpaceTimeGp fit_space_time_gp(const Vector &t, const Matrix &x_s, const Vector &y,
                              KernelFamily spatial_family, const GpFitOptions &opt = {});

}  // namespace sgplvm
