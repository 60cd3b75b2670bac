#include "sgplvm/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace sgplvm {

std::string to_string(SynthKind k) {
  return k == SynthKind::GpImages ? "gp_images" : "dynamic_video";
}

SynthKind synth_kind_from_string(const std::string &s) {
  if (s == "gp_images") return SynthKind::GpImages;
  if (s == "dynamic_video") return SynthKind::DynamicVideo;
  throw ConfigError("unknown synthetic dataset kind '" + s + "'");
}

namespace {

Matrix standard_normal(std::mt19937_64 &rng, Index r, Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) m(i, j) = n(rng);
  }
  return m;
}

Matrix cholesky_factor(const Matrix &k) {
  return jittered_cholesky<double>(k, 1e-8 * k.diagonal().mean(), "synthetic covariance").first;
}

ObservationGrid make_grid(const std::vector<Matrix> &axes, const Matrix &y, Index n) {
  ObservationGrid g;
  g.spatial_factors = axes;
  g.n_xi = n;
  g.y = y;
  return g;
}

}  // namespace

SynthDataset synth_generate(const SynthParams &p, std::uint64_t seed) {
  if (p.n_train < 1 || p.n_test < 0 || p.latent_dim < 1 || p.d_y < 1 || p.shape.empty()) {
    throw ConfigError("synthetic dataset sizes must be positive");
  }
  if (p.noise_std < 0.0 || p.missing_fraction < 0.0 || p.missing_fraction > 1.0) {
    throw ConfigError("synthetic noise and missing fraction out of range");
  }
  std::mt19937_64 rng(seed);
  std::vector<Matrix> axes;
  for (Index k : p.shape) axes.push_back(Vector::LinSpaced(k, 0.0, static_cast<double>(k - 1)));
  const Matrix xs = cartesian_product(axes);
  const Index ns = xs.rows();
  const Index n = p.n_train + p.n_test;
  const bool video = p.kind == SynthKind::DynamicVideo;

  Matrix latents;
  Vector t;
  if (video) {
    t = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
    KernelSpec<double> kt;
    kt.lengthscales = Vector::Constant(1, p.temporal_lengthscale);
    latents = cholesky_factor(kernel_matrix<double>(kt, Matrix(t))) * standard_normal(rng, n, p.latent_dim);
  } else {
    latents = standard_normal(rng, n, p.latent_dim);
  }

  KernelSpec<double> kl;
  kl.variance = p.signal_variance;
  kl.lengthscales = Vector::Constant(1, p.latent_lengthscale);
  KernelSpec<double> ks;
  ks.family = p.spatial_family;
  ks.lengthscales = Vector::Constant(1, p.spatial_lengthscale);
  const Matrix l_lat = cholesky_factor(kernel_matrix(kl, latents));
  const Matrix l_s = cholesky_factor(kernel_matrix(ks, xs));

  // Per channel, F = L_lat E L_s^T is a draw with covariance K_lat (x) K_s.
  Matrix f(n * ns, p.d_y);
  for (Index j = 0; j < p.d_y; ++j) {
    const Matrix fj = l_lat * standard_normal(rng, n, ns) * l_s.transpose();
    Eigen::Map<RowMat<double>>(f.col(j).data(), n, ns) = fj;
  }
  Matrix y = f;
  if (p.noise_std > 0.0) y += p.noise_std * standard_normal(rng, n * ns, p.d_y);

  std::vector<Index> train_idx, test_idx;
  for (Index i = 0; i < n; ++i) {
    const bool is_test = video ? (i % 2 == 1 && static_cast<Index>(test_idx.size()) < p.n_test)
                               : i >= p.n_train;
    (is_test ? test_idx : train_idx).push_back(i);
  }
  if (video && static_cast<Index>(test_idx.size()) != p.n_test) {
    throw ConfigError("video split needs at least as many training as test frames");
  }

  auto rows_of = [&](const Matrix &m, const std::vector<Index> &ex) {
    Matrix out(static_cast<Index>(ex.size()) * ns, m.cols());
    for (std::size_t k = 0; k < ex.size(); ++k) {
      out.middleRows(static_cast<Index>(k) * ns, ns) = m.middleRows(ex[k] * ns, ns);
    }
    return out;
  };

  SynthDataset d;
  d.train = make_grid(axes, rows_of(y, train_idx), p.n_train);
  d.test = make_grid(axes, rows_of(y, test_idx), p.n_test);
  d.f_train = rows_of(f, train_idx);
  d.f_test = rows_of(f, test_idx);
  d.latents_train = latents(train_idx, Eigen::all);
  d.latents_test = latents(test_idx, Eigen::all);
  if (video) {
    d.train.timestamps = t(train_idx);
    d.test.timestamps = t(test_idx);
    d.test_mask = Matrix::Zero(p.n_test, ns);
  } else {
    d.test_mask = Matrix::Ones(p.n_test, ns);
    const auto n_missing = static_cast<Index>(std::llround(p.missing_fraction * static_cast<double>(ns)));
    std::vector<Index> perm(ns);
    for (Index i = 0; i < p.n_test; ++i) {
      std::iota(perm.begin(), perm.end(), Index(0));
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Index k = 0; k < n_missing; ++k) d.test_mask(i, perm[k]) = 0.0;
    }
  }
  return d;
}

}  // namespace sgplvm
