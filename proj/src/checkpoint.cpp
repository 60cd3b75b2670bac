#include <cmath>

#include "sgplvm/io.hpp"

namespace sgplvm {

namespace {

constexpr double kFormatVersion = 1.0;
// Rows of Y are ordered latent-major with the spatial index fastest.
constexpr double kOrderingXiMajor = 1.0;

Matrix kernel_row(const KernelSpec<double> &k) {
  Matrix r(1, 2 + k.lengthscales.size());
  r(0, 0) = static_cast<double>(static_cast<int>(k.family));
  r(0, 1) = k.variance;
  for (Index i = 0; i < k.lengthscales.size(); ++i) r(0, 2 + i) = k.lengthscales(i);
  return r;
}

KernelSpec<double> kernel_from_row(const Matrix &r, const std::string &name) {
  if (r.rows() != 1 || r.cols() < 3) throw DataError("checkpoint array '" + name + "' is malformed");
  const double fam = r(0, 0);
  if (fam != 0.0 && fam != 1.0 && fam != 2.0) {
    throw DataError("checkpoint array '" + name + "' has an unknown kernel family");
  }
  KernelSpec<double> k;
  k.family = static_cast<KernelFamily>(static_cast<int>(fam));
  k.variance = r(0, 1);
  k.lengthscales = r.row(0).tail(r.cols() - 2).transpose();
  return k;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

double get_scalar(const MatrixFile &f, const std::string &name) {
  const Matrix &m = f.get(name);
  if (m.size() != 1) throw DataError("checkpoint array '" + name + "' must be 1x1");
  return m(0, 0);
}

Vector as_vector(const Matrix &m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

}  // namespace

MatrixFile checkpoint_arrays(const SgplvmModel &m) {
  MatrixFile f;
  f.set("format_version", scalar(kFormatVersion));
  f.set("ordering", scalar(kOrderingXiMajor));
  f.set("latent_kernel", kernel_row(m.latent_kernel));
  f.set("spatial_kernel", kernel_row(m.spatial_kernel));
  if (m.has_temporal) f.set("temporal_kernel", kernel_row(m.temporal_kernel));
  f.set("beta", scalar(m.beta));
  f.set("log_beta", scalar(std::log(m.beta)));
  f.set("z_xi", m.z_xi);
  f.set("z_s", m.z_s);
  Matrix flags(1, 5);
  flags << (m.z_s_tied ? 1.0 : 0.0), (m.optimize_z_s ? 1.0 : 0.0), (m.trained ? 1.0 : 0.0),
      (m.q.mode == LatentMode::Dynamical ? 1.0 : 0.0), static_cast<double>(m.iterations_done);
  f.set("flags", flags);
  f.set("jitter", (Matrix(1, 2) << m.jitter, m.temporal_jitter).finished());
  f.set("q_mu", m.q.mu);
  f.set("q_log_var", m.q.log_var);
  if (m.q.timestamps.size() > 0) f.set("timestamps", m.q.timestamps);
  f.set("std_mean", m.standardizer.mean.transpose());
  f.set("std_scale", m.standardizer.scale.transpose());
  f.set("x_s", m.x_s);
  f.set("y", m.y);
  f.set("n_xi", scalar(static_cast<double>(m.n_xi)));
  return f;
}

SgplvmModel model_from_arrays(const MatrixFile &f) {
  if (get_scalar(f, "format_version") != kFormatVersion) {
    throw DataError("unsupported checkpoint format version");
  }
  if (get_scalar(f, "ordering") != kOrderingXiMajor) {
    throw DataError("checkpoint uses an unknown data ordering");
  }
  SgplvmModel m;
  m.latent_kernel = kernel_from_row(f.get("latent_kernel"), "latent_kernel");
  m.spatial_kernel = kernel_from_row(f.get("spatial_kernel"), "spatial_kernel");
  m.has_temporal = f.has("temporal_kernel");
  if (m.has_temporal) m.temporal_kernel = kernel_from_row(f.get("temporal_kernel"), "temporal_kernel");
  m.beta = get_scalar(f, "beta");
  m.z_xi = f.get("z_xi");
  m.z_s = f.get("z_s");
  const Matrix &flags = f.get("flags");
  if (flags.size() != 5) throw DataError("checkpoint array 'flags' must have 5 entries");
  m.z_s_tied = flags(0) != 0.0;
  m.optimize_z_s = flags(1) != 0.0;
  m.trained = flags(2) != 0.0;
  m.q.mode = flags(3) != 0.0 ? LatentMode::Dynamical : LatentMode::Iid;
  m.iterations_done = static_cast<int>(flags(4));
  const Matrix &jit = f.get("jitter");
  if (jit.size() != 2) throw DataError("checkpoint array 'jitter' must have 2 entries");
  m.jitter = jit(0);
  m.temporal_jitter = jit(1);
  m.q.mu = f.get("q_mu");
  m.q.log_var = f.get("q_log_var");
  if (f.has("timestamps")) m.q.timestamps = as_vector(f.get("timestamps"));
  m.standardizer.mean = as_vector(f.get("std_mean"));
  m.standardizer.scale = as_vector(f.get("std_scale"));
  m.x_s = f.get("x_s");
  m.y = f.get("y");
  m.n_xi = static_cast<Index>(get_scalar(f, "n_xi"));

  try {
    m.latent_kernel.validate(m.z_xi.cols());
    m.spatial_kernel.validate(m.x_s.cols());
    if (m.has_temporal) m.temporal_kernel.validate(1);
    m.q.validate();
  } catch (const Error &e) {
    throw DataError(std::string("inconsistent checkpoint: ") + e.what());
  }
  if (m.q.mu.rows() != m.n_xi || m.y.rows() != m.n_xi * m.x_s.rows() ||
      m.z_xi.cols() != m.q.dim() || m.z_s.cols() != m.x_s.cols() ||
      m.standardizer.mean.size() != m.y.cols() || m.standardizer.scale.size() != m.y.cols() ||
      !(m.beta > 0.0)) {
    throw DataError("inconsistent checkpoint: array shapes do not agree");
  }
  return m;
}

void save_checkpoint(const std::string &path, const SgplvmModel &model) {
  write_matrix_file(path, checkpoint_arrays(model));
}

SgplvmModel load_checkpoint(const std::string &path) {
  try {
    return model_from_arrays(read_matrix_file(path));
  } catch (const DataError &e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace sgplvm
