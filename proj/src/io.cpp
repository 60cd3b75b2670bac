#include "sgplvm/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sgplvm {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'P', 'L'};
constexpr std::uint32_t kVersion = 1;

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void check_finite(const std::string &name, const Matrix &m, const std::string &source) {
  if (!m.allFinite()) throw DataError(source + ": array '" + name + "' has non-finite values");
}

template <typename T>
void put(std::string &out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string &bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError(source_ + ": truncated binary matrix file");
  }

 private:
  const std::string &bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

static_assert(sizeof(double) == 8, "64-bit doubles required");

bool host_little_endian() {
  const std::uint16_t one = 1;
  unsigned char c;
  std::memcpy(&c, &one, 1);
  return c == 1;
}

}  // namespace

bool MatrixFile::has(const std::string &name) const {
  return std::any_of(arrays.begin(), arrays.end(), [&](const auto &a) { return a.first == name; });
}

const Matrix &MatrixFile::get(const std::string &name) const {
  for (const auto &a : arrays) {
    if (a.first == name) return a.second;
  }
  throw DataError("missing array '" + name + "'");
}

void MatrixFile::set(const std::string &name, Matrix m) {
  for (auto &a : arrays) {
    if (a.first == name) {
      a.second = std::move(m);
      return;
    }
  }
  arrays.emplace_back(name, std::move(m));
}

Encoding encoding_for_path(const std::string &path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? Encoding::Csv : Encoding::Binary;
}

std::string encode_csv(const MatrixFile &f) {
  std::string out;
  char buf[40];
  for (const auto &[name, m] : f.arrays) {
    check_finite(name, m, "write");
    out += "#name:" + name + "\n";
    out += "#shape:" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "\n";
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
        if (c > 0) out += ',';
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

MatrixFile decode_csv(const std::string &text, const std::string &source) {
  MatrixFile f;
  std::istringstream in(text);
  std::string line, pending_name;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.rfind("#name:", 0) == 0) {
      pending_name = trim(line.substr(6));
      continue;
    }
    if (line.rfind("#shape:", 0) != 0) {
      throw DataError(where + ": expected a '#shape:rows,cols' header");
    }
    long long rows = -1, cols = -1;
    if (std::sscanf(line.c_str() + 7, "%lld,%lld", &rows, &cols) != 2 || rows < 0 || cols < 0) {
      throw DataError(where + ": malformed shape header");
    }
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) {
        throw DataError(where + ": expected " + std::to_string(rows) + " rows, file ended after " +
                        std::to_string(r));
      }
      ++line_no;
      std::istringstream row(line);
      std::string cell;
      Index c = 0;
      while (std::getline(row, cell, ',')) {
        if (c >= cols) {
          ++c;
          break;
        }
        char *end = nullptr;
        const std::string t = trim(cell);
        m(r, c) = std::strtod(t.c_str(), &end);
        if (t.empty() || end != t.c_str() + t.size()) {
          throw DataError(source + ":" + std::to_string(line_no) + ": bad number '" + t + "'");
        }
        ++c;
      }
      if (c != cols) {
        throw DataError(source + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(cols) + " values");
      }
    }
    const std::string name = pending_name.empty() ? "data" : pending_name;
    check_finite(name, m, source);
    f.set(name, std::move(m));
    pending_name.clear();
  }
  return f;
}

std::string encode_binary(const MatrixFile &f) {
  if (!host_little_endian()) throw StateError("binary matrix files need a little-endian host");
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.arrays.size()));
  for (const auto &[name, m] : f.arrays) {
    check_finite(name, m, "write");
    if (name.size() > 0xffff) throw InputError("array name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    const RowMat<double> rm = m;
    out.append(reinterpret_cast<const char *>(rm.data()), sizeof(double) * rm.size());
  }
  return out;
}

MatrixFile decode_binary(const std::string &bytes, const std::string &source) {
  if (!host_little_endian()) throw StateError("binary matrix files need a little-endian host");
  Reader rd(bytes, source);
  if (rd.get_string(4) != std::string(kMagic, 4)) throw DataError(source + ": bad magic bytes");
  const auto version = rd.get<std::uint32_t>();
  if (version != kVersion) throw DataError(source + ": unsupported version " + std::to_string(version));
  const auto count = rd.get<std::uint32_t>();
  MatrixFile f;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = rd.get<std::uint16_t>();
    const std::string name = rd.get_string(len);
    const auto rows = rd.get<std::uint64_t>();
    const auto cols = rd.get<std::uint64_t>();
    if (cols != 0 && rows > (bytes.size() / 8) / cols) {
      throw DataError(source + ": array '" + name + "' declares more data than the file holds");
    }
    rd.need(rows * cols * 8);
    RowMat<double> m(static_cast<Index>(rows), static_cast<Index>(cols));
    const std::string payload = rd.get_string(rows * cols * 8);
    std::memcpy(m.data(), payload.data(), payload.size());
    check_finite(name, m, source);
    f.set(name, Matrix(m));
  }
  if (!rd.done()) throw DataError(source + ": trailing bytes after the last array");
  return f;
}

void write_file_atomic(const std::string &path, const std::string &content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

void write_matrix_file(const std::string &path, const MatrixFile &f) {
  write_matrix_file(path, f, encoding_for_path(path));
}

void write_matrix_file(const std::string &path, const MatrixFile &f, Encoding enc) {
  write_file_atomic(path, enc == Encoding::Csv ? encode_csv(f) : encode_binary(f));
}

MatrixFile read_matrix_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() >= 4 && bytes.compare(0, 4, std::string(kMagic, 4)) == 0) {
    return decode_binary(bytes, path);
  }
  return decode_csv(bytes, path);
}

std::vector<Matrix> pixel_axes(const std::vector<Index> &shape, int refine) {
  if (refine < 1) throw InputError("refinement factor must be at least 1");
  std::vector<Matrix> out;
  for (Index k : shape) {
    if (k < 1) throw InputError("grid axes must be non-empty");
    const Index n = k * refine;
    out.push_back(Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1) / refine));
  }
  return out;
}

ObservationGrid grid_from_arrays(const MatrixFile &f, const GridLayout &layout,
                                 const std::string &source) {
  if (!f.has("Y")) throw DataError(source + ": missing array 'Y'");
  std::vector<Index> shape = layout.spatial_shape;
  if (shape.empty()) {
    if (!f.has("shape")) throw DataError(source + ": no spatial shape given and no 'shape' array");
    const Matrix &s = f.get("shape");
    for (Index i = 0; i < s.size(); ++i) {
      const double v = s.data()[i];
      if (v < 1 || v != std::floor(v)) throw DataError(source + ": 'shape' must hold positive integers");
      shape.push_back(static_cast<Index>(v));
    }
  }
  if (layout.d_y < 1) throw ConfigError("d_y must be positive");
  ObservationGrid g;
  g.spatial_factors = pixel_axes(shape);
  for (std::size_t a = 0; a < shape.size(); ++a) {
    const std::string key = "X_s_" + std::to_string(a);
    if (f.has(key)) {
      const Matrix &c = f.get(key);
      if (c.rows() != shape[a]) {
        throw DataError(source + ": '" + key + "' has " + std::to_string(c.rows()) +
                        " rows, expected " + std::to_string(shape[a]));
      }
      g.spatial_factors[a] = c;
    }
  }
  const Index ns = g.n_s();
  const Matrix &y = f.get("Y");
  const Index dy = layout.d_y;
  if (y.cols() == dy && y.rows() % ns == 0) {
    g.y = y;
    g.n_xi = y.rows() / ns;
  } else if (y.cols() == ns * dy) {
    g.n_xi = y.rows();
    g.y.resize(g.n_xi * ns, dy);
    for (Index i = 0; i < g.n_xi; ++i) {
      for (Index s = 0; s < ns; ++s) {
        for (Index c = 0; c < dy; ++c) g.y(i * ns + s, c) = y(i, s * dy + c);
      }
    }
  } else {
    throw DataError(source + ": 'Y' is " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()) +
                    ", expected (n_xi*" + std::to_string(ns) + ")x" + std::to_string(dy) +
                    " or n_xi x " + std::to_string(ns * dy));
  }
  if (f.has("t")) {
    const Matrix &t = f.get("t");
    if (t.size() != g.n_xi) {
      throw DataError(source + ": 't' has " + std::to_string(t.size()) + " entries, expected " +
                      std::to_string(g.n_xi));
    }
    g.timestamps = Eigen::Map<const Vector>(t.data(), t.size());
  }
  try {
    g.validate();
  } catch (const Error &e) {
    throw DataError(source + ": " + e.what());
  }
  return g;
}

ObservationGrid load_grid(const std::string &path, const GridLayout &layout) {
  return grid_from_arrays(read_matrix_file(path), layout, path);
}

MatrixFile grid_arrays(const ObservationGrid &g) {
  MatrixFile f;
  f.set("Y", g.y);
  Matrix shape(1, static_cast<Index>(g.spatial_factors.size()));
  for (std::size_t a = 0; a < g.spatial_factors.size(); ++a) {
    shape(0, static_cast<Index>(a)) = static_cast<double>(g.spatial_factors[a].rows());
    f.set("X_s_" + std::to_string(a), g.spatial_factors[a]);
  }
  f.set("shape", shape);
  if (g.timestamps.size() > 0) f.set("t", g.timestamps);
  return f;
}

ConfigMap parse_config(const std::string &text, const std::string &source) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap read_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

namespace {

double to_double(const std::string &key, const std::string &v) {
  char *end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  return d;
}

long long to_int(const std::string &key, const std::string &v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  return static_cast<long long>(d);
}

bool to_bool(const std::string &key, const std::string &v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace

TrainConfig train_config_from(const ConfigMap &cfg) {
  TrainConfig c;
  for (const auto &[k, v] : cfg) {
    try {
      if (k == "optimizer") c.optimizer = optimizer_from_string(v);
      else if (k == "max_iters") c.max_iters = static_cast<int>(to_int(k, v));
      else if (k == "learning_rate") c.learning_rate = to_double(k, v);
      else if (k == "lbfgs_memory") c.lbfgs_memory = static_cast<int>(to_int(k, v));
      else if (k == "init") c.init = init_from_string(v);
      else if (k == "fixed_beta_iters") c.fixed_beta_iters = static_cast<int>(to_int(k, v));
      else if (k == "seed") c.seed = static_cast<std::uint64_t>(to_int(k, v));
      else if (k == "tolerance") c.tolerance = to_double(k, v);
      else if (k == "latent_mode") c.latent_mode = latent_mode_from_string(v);
      else if (k == "latent_dim") c.latent_dim = to_int(k, v);
      else if (k == "m_xi") c.m_xi = to_int(k, v);
      else if (k == "m_s") c.m_s = to_int(k, v);
      else if (k == "spatial_kernel") c.spatial_family = kernel_family_from_string(v);
      else if (k == "temporal_kernel") c.temporal_family = kernel_family_from_string(v);
      else if (k == "spatial_shared_lengthscale") c.spatial_shared_lengthscale = to_bool(k, v);
      else if (k == "optimize_z_s") c.optimize_z_s = to_bool(k, v);
      else if (k == "init_beta") c.init_beta = to_double(k, v);
      else if (k == "init_latent_var") c.init_latent_var = to_double(k, v);
      else if (k == "jitter") c.jitter = to_double(k, v);
      else if (k == "spatial_lengthscale") c.spatial_lengthscale = to_double(k, v);
      else if (k == "temporal_lengthscale") c.temporal_lengthscale = to_double(k, v);
      else throw ConfigError("unknown config key '" + k + "'");
    } catch (const ConfigError &) {
      throw;
    } catch (const Error &e) {
      throw ConfigError("config key '" + k + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

}  // namespace sgplvm
