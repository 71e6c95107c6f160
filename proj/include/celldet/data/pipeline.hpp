#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "celldet/codec/labels.hpp"
#include "celldet/tensor/tensor.hpp"

namespace celldet {

// 16-entry control-point table approximating a spectral colormap running
// black -> blue -> cyan -> green -> yellow -> red -> magenta -> near-white;
// entries are linearly interpolated at equally spaced positions i/15.
extern const std::array<std::array<float, 3>, 16> kSpectralLut;

// Gray HxW in [0,1] (values clamped) -> HxWx3 via the LUT.
Tensor pseudocolor(const Tensor& gray);

// Min -> 0, max -> 1, affine in between; constant images map to all zeros.
Tensor minmax_normalize(const Tensor& image);

enum class AugmentOp { kShift, kRotate, kGridDistortion, kElastic };

// Throws on unknown names; accepts shift|rotate|grid_distortion|elastic.
AugmentOp parse_augment_op(const std::string& name);
std::string augment_op_name(AugmentOp op);

struct AugmentParams {
  double shift_x = 0.0;
  double shift_y = 0.0;
  double rotate_deg = 0.0;
  int grid_cells = 4;
  double grid_magnitude = 6.0;   // node displacement, pixels
  double elastic_alpha = 8.0;    // displacement scale, pixels
  double elastic_sigma = 6.0;    // smoothing of the random field
};

// Applies one geometric transform to image (bilinear) and mask (nearest);
// out-of-frame samples read as zero / background. The random ops
// (grid_distortion, elastic) draw their fields from `seed`.
std::pair<Tensor, InstanceMask> augment(const Tensor& image, const InstanceMask& mask,
                                        AugmentOp op, const AugmentParams& params,
                                        std::uint64_t seed);

// Bilinear for images, nearest for masks (half-pixel-centers convention).
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);
InstanceMask resize_nearest(const InstanceMask& mask, int out_h, int out_w);

// Seeded shuffle split: floor(0.8 n) train, floor(0.1 n) validation, rest test.
struct SplitIndices {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};
SplitIndices split_dataset(int count, std::uint64_t seed);

}  // namespace celldet
