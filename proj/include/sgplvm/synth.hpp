#pragma once

// Synthetic data drawn from the model itself: latent points (independent, or
// smooth in time) pushed through a GP with a product latent x spatial kernel.

#include <cstdint>
#include <string>
#include <vector>

#include "sgplvm/model.hpp"

namespace sgplvm {

enum class SynthKind { GpImages, DynamicVideo };

std::string to_string(SynthKind k);
SynthKind synth_kind_from_string(const std::string &s);

struct SynthParams {
  SynthKind kind = SynthKind::GpImages;
  Index n_train = 40;
  Index n_test = 20;
  std::vector<Index> shape = {12, 12};
  Index latent_dim = 2;
  Index d_y = 1;
  double latent_lengthscale = 1.0;
  double signal_variance = 1.0;
  KernelFamily spatial_family = KernelFamily::Matern32;
  double spatial_lengthscale = 2.0;
  double temporal_lengthscale = 6.0;  // in frames
  double noise_std = 0.05;
  double missing_fraction = 0.5;      // per test image
};

struct SynthDataset {
  ObservationGrid train;
  ObservationGrid test;
  Matrix test_mask;      // n_test x n_s, 1 where observed
  Matrix latents_train;  // n_train x latent_dim
  Matrix latents_test;
  Matrix f_train;        // noise-free values, same layout as train.y
  Matrix f_test;
};

// Images are split into train and test after generation. For videos the
// test set holds every other frame (odd frame indices) and has no observed
// pixels.
SynthDataset synth_generate(const SynthParams &p, std::uint64_t seed);

}  // namespace sgplvm
