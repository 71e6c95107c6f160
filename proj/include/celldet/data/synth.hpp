#pragma once

#include <cstdint>
#include <vector>

#include "celldet/codec/labels.hpp"
#include "celldet/tensor/tensor.hpp"

namespace celldet {

// Synthetic fluorescence-style image generator: bright ellipsoidal cells
// with smooth intensity falloff on a noisy dark background.
struct SynthConfig {
  int image_size = 96;
  int cell_count_min = 4;
  int cell_count_max = 9;
  double cell_axis_min = 10.0;  // full axis length, pixels
  double cell_axis_max = 22.0;
  float intensity_min = 0.55f;
  float intensity_max = 0.95f;
  float background_level = 0.08f;
  float noise_std = 0.02f;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthSample {
  Tensor image;  // HxW grayscale in [0,1]
  InstanceMask mask;
  std::vector<CellAnnotation> planted;  // generator bookkeeping (geometric params)
};

// Deterministic per seed; throws after 1000 failed placement attempts for a
// cell (over-dense configuration).
SynthSample synth_generate(const SynthConfig& cfg);

}  // namespace celldet
