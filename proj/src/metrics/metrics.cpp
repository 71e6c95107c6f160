#include "celldet/metrics/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace celldet {

double huber(const Tensor& y, const Tensor& y_hat) {
  if (!y.same_shape(y_hat)) {
    throw std::invalid_argument("huber: shape mismatch " + y.shape_str() + " vs " +
                                y_hat.shape_str());
  }
  const std::int64_t n = y.numel();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(y.data()[i]) - static_cast<double>(y_hat.data()[i]);
    const double ar = std::fabs(r);
    acc += ar <= 1.0 ? 0.5 * r * r : ar - 0.5;
  }
  return acc / static_cast<double>(n);
}

LossTerms total_loss(const Tensor& pred_heatmap, const Tensor& pred_height,
                     const Tensor& pred_width, const LabelMaps& targets) {
  LossTerms t;
  t.heatmap = huber(targets.heatmap, pred_heatmap);
  t.height = huber(targets.height_map, pred_height);
  t.width = huber(targets.width_map, pred_width);
  return t;
}

BinaryMask threshold_heatmap(const Tensor& heatmap, float t) {
  if (heatmap.rank() != 2) {
    throw std::invalid_argument("threshold_heatmap: expected HxW, got " + heatmap.shape_str());
  }
  BinaryMask mask(heatmap.dim(0), heatmap.dim(1));
  const std::int64_t n = heatmap.numel();
  for (std::int64_t i = 0; i < n; ++i) mask.v[static_cast<std::size_t>(i)] = heatmap.data()[i] >= t;
  return mask;
}

double mean_iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw std::invalid_argument("mean_iou: mask sizes disagree");
  }
  // Confusion counts for the two classes.
  std::int64_t tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0};
  const std::size_t n = pred.v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int p = pred.v[i] ? 1 : 0;
    const int g = gt.v[i] ? 1 : 0;
    if (p == g) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  double sum = 0.0;
  for (int c = 0; c < 2; ++c) {
    const std::int64_t denom = tp[c] + fp[c] + fn[c];
    sum += denom == 0 ? 1.0 : static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return sum / 2.0;
}

double ssim(const Tensor& x1, const Tensor& x2, double dynamic_range) {
  if (!x1.same_shape(x2)) {
    throw std::invalid_argument("ssim: shape mismatch " + x1.shape_str() + " vs " + x2.shape_str());
  }
  if (dynamic_range <= 0.0) throw std::invalid_argument("ssim: dynamic range must be positive");
  const std::int64_t n = x1.numel();
  double mu1 = 0.0, mu2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    mu1 += x1.data()[i];
    mu2 += x2.data()[i];
  }
  mu1 /= static_cast<double>(n);
  mu2 /= static_cast<double>(n);
  double var1 = 0.0, var2 = 0.0, cov = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d1 = x1.data()[i] - mu1;
    const double d2 = x2.data()[i] - mu2;
    var1 += d1 * d1;
    var2 += d2 * d2;
    cov += d1 * d2;
  }
  var1 /= static_cast<double>(n);
  var2 /= static_cast<double>(n);
  cov /= static_cast<double>(n);
  const double c1 = 0.01 * dynamic_range;
  const double c2 = 0.03 * dynamic_range;
  const double k1 = c1 * c1;
  const double k2 = c2 * c2;
  return ((2.0 * mu1 * mu2 + k1) * (2.0 * cov + k2)) /
         ((mu1 * mu1 + mu2 * mu2 + k1) * (var1 + var2 + k2));
}

}  // namespace celldet
