#pragma once

#include <cstdint>
#include <vector>

#include "celldet/tensor/tensor.hpp"

namespace celldet {

// Instance segmentation mask: background 0, each cell a distinct positive label.
struct InstanceMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint16_t> v;  // row-major

  InstanceMask() = default;
  InstanceMask(int height, int width) : h(height), w(width), v(static_cast<std::size_t>(height) * width, 0) {}
  std::uint16_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  std::uint16_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

struct BinaryMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> v;

  BinaryMask() = default;
  BinaryMask(int height, int width) : h(height), w(width), v(static_cast<std::size_t>(height) * width, 0) {}
  std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// One cell: centroid (pixel coordinates, x along width) plus tight
// bounding-box extent. Doubles so that integer shifts stay exact.
struct CellAnnotation {
  int id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

// Training target triple; all maps H x W with values in [0, 1].
struct LabelMaps {
  Tensor heatmap;
  Tensor height_map;
  Tensor width_map;
};

struct Detection {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  float score = 0.0f;
};

struct EncodeParams {
  // Centroid ellipse spans this fraction of the cell extent.
  double ellipse_scale = 0.5;
  // Dimension rectangles span this fraction of the cell extent.
  double rect_scale = 0.3;
};

// Scans a mask into per-label annotations, ordered by ascending id.
// Centroid = mean of member pixel coordinates; w/h from the tight box.
std::vector<CellAnnotation> annotations_from_instance_mask(const InstanceMask& mask);

// Pixel (x, y) is inside iff ((x-cx)/a)^2 + ((y-cy)/b)^2 <= 1.
BinaryMask rasterize_ellipse(double cx, double cy, double a, double b, int h, int w);

// Builds the heatmap / height / width target maps. Per cell the centroid
// ellipse is rasterized, blurred with a Gaussian of sigma max(1, min(w,h)/8),
// renormalized to peak 1, and max-composited; dimension rectangles are
// written with later ids overwriting earlier ones on overlap.
LabelMaps encode(const std::vector<CellAnnotation>& annotations, int h, int w,
                 const EncodeParams& params = {});

// Thresholds the heatmap (>= threshold), finds 8-connected components, and
// reads dimensions at each component's heatmap argmax (ties resolved to the
// smallest row, then column). Detections are ordered by peak (row, col).
std::vector<Detection> decode(const Tensor& heatmap, const Tensor& height_map,
                              const Tensor& width_map, float threshold);

}  // namespace celldet
