#pragma once

#include "celldet/codec/labels.hpp"
#include "celldet/tensor/tensor.hpp"

namespace celldet {

// Loss terms combined as total = heatmap + 0.5*height + 0.5*width.
struct LossTerms {
  double heatmap = 0.0;
  double height = 0.0;
  double width = 0.0;

  double total() const { return heatmap + 0.5 * height + 0.5 * width; }
};

// Per-element Huber with transition point 1.0 on |y - y_hat|, mean-reduced.
double huber(const Tensor& y, const Tensor& y_hat);

LossTerms total_loss(const Tensor& pred_heatmap, const Tensor& pred_height,
                     const Tensor& pred_width, const LabelMaps& targets);

// Pixel true iff value >= t.
BinaryMask threshold_heatmap(const Tensor& heatmap, float t);

// Two-class (background / foreground) mean IoU. A class absent from both
// masks contributes IoU 1.
double mean_iou(const BinaryMask& pred, const BinaryMask& gt);

// Global single-window SSIM with population statistics; constants
// (0.01 L)^2 and (0.03 L)^2.
double ssim(const Tensor& x1, const Tensor& x2, double dynamic_range = 1.0);

}  // namespace celldet
