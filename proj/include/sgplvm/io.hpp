#pragma once

// File formats: named 2-D arrays in a text (CSV) or binary container,
// model checkpoints, observation grids and flat key = value configs.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sgplvm/model.hpp"

namespace sgplvm {

struct MatrixFile {
  std::vector<std::pair<std::string, Matrix>> arrays;

  bool has(const std::string &name) const;
  const Matrix &get(const std::string &name) const;
  void set(const std::string &name, Matrix m);
};

enum class Encoding { Csv, Binary };

// ".csv" selects the text encoding, anything else the binary one.
Encoding encoding_for_path(const std::string &path);

std::string encode_csv(const MatrixFile &f);
std::string encode_binary(const MatrixFile &f);
MatrixFile decode_csv(const std::string &text, const std::string &source = "<memory>");
MatrixFile decode_binary(const std::string &bytes, const std::string &source = "<memory>");

// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::string &path, const std::string &content);
void write_matrix_file(const std::string &path, const MatrixFile &f);
void write_matrix_file(const std::string &path, const MatrixFile &f, Encoding enc);
// The encoding is detected from the content.
MatrixFile read_matrix_file(const std::string &path);

MatrixFile checkpoint_arrays(const SgplvmModel &model);
SgplvmModel model_from_arrays(const MatrixFile &f);
void save_checkpoint(const std::string &path, const SgplvmModel &model);
SgplvmModel load_checkpoint(const std::string &path);

// Observations of n_xi examples on a pixel grid. Y is either already in
// (example x pixel) row order, (n_xi * n_s) x d_y, or one example per row,
// n_xi x (n_s * d_y) with the channel index fastest. Pixel coordinates are
// unit-spaced integers unless explicit per-axis coordinates are provided.
struct GridLayout {
  std::vector<Index> spatial_shape;  // empty: read the "shape" array
  Index d_y = 1;
};

ObservationGrid grid_from_arrays(const MatrixFile &f, const GridLayout &layout,
                                 const std::string &source = "<memory>");
ObservationGrid load_grid(const std::string &path, const GridLayout &layout);
MatrixFile grid_arrays(const ObservationGrid &g);

// Pixel axis coordinates 0, 1, ..., k-1 for every axis, optionally refined by
// an integer factor so that the original pixels stay on the grid.
std::vector<Matrix> pixel_axes(const std::vector<Index> &shape, int refine = 1);

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(const std::string &text, const std::string &source = "<memory>");
ConfigMap read_config(const std::string &path);
// Unknown keys raise ConfigError.
TrainConfig train_config_from(const ConfigMap &cfg);

}  // namespace sgplvm
