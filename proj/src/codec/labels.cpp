#include "celldet/codec/labels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace celldet {

std::vector<CellAnnotation> annotations_from_instance_mask(const InstanceMask& mask) {
  struct Acc {
    std::int64_t count = 0;
    double sum_x = 0.0, sum_y = 0.0;
    int min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  };
  std::map<int, Acc> accs;  // ordered by label id
  for (int y = 0; y < mask.h; ++y) {
    for (int x = 0; x < mask.w; ++x) {
      const int label = mask.at(y, x);
      if (label == 0) continue;
      auto [it, inserted] = accs.try_emplace(label);
      Acc& a = it->second;
      if (inserted) {
        a.min_x = a.max_x = x;
        a.min_y = a.max_y = y;
      } else {
        a.min_x = std::min(a.min_x, x);
        a.max_x = std::max(a.max_x, x);
        a.min_y = std::min(a.min_y, y);
        a.max_y = std::max(a.max_y, y);
      }
      a.sum_x += x;
      a.sum_y += y;
      ++a.count;
    }
  }
  std::vector<CellAnnotation> out;
  out.reserve(accs.size());
  for (const auto& [label, a] : accs) {
    CellAnnotation ann;
    ann.id = label;
    ann.cx = a.sum_x / static_cast<double>(a.count);
    ann.cy = a.sum_y / static_cast<double>(a.count);
    ann.w = a.max_x - a.min_x + 1;
    ann.h = a.max_y - a.min_y + 1;
    out.push_back(ann);
  }
  return out;
}

BinaryMask rasterize_ellipse(double cx, double cy, double a, double b, int h, int w) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("rasterize_ellipse: semi-axes must be positive");
  BinaryMask mask(h, w);
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - b)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + b)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - a)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + a)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = (static_cast<double>(x) - cx) / a;
      const double dy = (static_cast<double>(y) - cy) / b;
      if (dx * dx + dy * dy <= 1.0) mask.at(y, x) = 1;
    }
  }
  return mask;
}

namespace {

// Gaussian weights for radius r, normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable blur of a patch. Out-of-patch samples read as zero. The taps are
// paired (-i, +i) so mirrored inputs blur to exactly mirrored outputs.
void blur_patch(std::vector<double>& patch, int ph, int pw, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  const std::vector<double> k = gaussian_kernel(sigma, radius);
  std::vector<double> tmp(patch.size());
  auto sample = [&](const std::vector<double>& buf, int y, int x) -> double {
    if (y < 0 || y >= ph || x < 0 || x >= pw) return 0.0;
    return buf[static_cast<std::size_t>(y) * pw + x];
  };
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      double acc = k[static_cast<std::size_t>(radius)] * sample(patch, y, x);
      for (int i = 1; i <= radius; ++i) {
        acc += k[static_cast<std::size_t>(radius + i)] *
               (sample(patch, y, x - i) + sample(patch, y, x + i));
      }
      tmp[static_cast<std::size_t>(y) * pw + x] = acc;
    }
  }
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      double acc = k[static_cast<std::size_t>(radius)] * sample(tmp, y, x);
      for (int i = 1; i <= radius; ++i) {
        acc += k[static_cast<std::size_t>(radius + i)] *
               (sample(tmp, y - i, x) + sample(tmp, y + i, x));
      }
      patch[static_cast<std::size_t>(y) * pw + x] = acc;
    }
  }
}

}  // namespace

LabelMaps encode(const std::vector<CellAnnotation>& annotations, int h, int w,
                 const EncodeParams& params) {
  LabelMaps maps;
  maps.heatmap = Tensor({h, w});
  maps.height_map = Tensor({h, w});
  maps.width_map = Tensor({h, w});

  for (const auto& ann : annotations) {
    if (ann.cx < 0.0 || ann.cx >= static_cast<double>(w) || ann.cy < 0.0 ||
        ann.cy >= static_cast<double>(h)) {
      throw std::invalid_argument("encode: annotation id " + std::to_string(ann.id) +
                                  " centroid outside " + std::to_string(h) + "x" +
                                  std::to_string(w));
    }
    if (ann.w < 1.0 || ann.h < 1.0) {
      throw std::invalid_argument("encode: annotation id " + std::to_string(ann.id) +
                                  " has degenerate extent");
    }
  }

  // Heatmap: per-cell blurred ellipse, peak renormalized to 1, max-composite.
  for (const auto& ann : annotations) {
    const double a = std::max(params.ellipse_scale * ann.w / 2.0, 0.5);
    const double b = std::max(params.ellipse_scale * ann.h / 2.0, 0.5);
    const double sigma = std::max(1.0, std::min(ann.w, ann.h) / 8.0);
    const int margin = static_cast<int>(std::ceil(3.0 * sigma)) + 1;
    // Window symmetric about the centroid so mirrored layouts stay exact.
    const int x0 = static_cast<int>(std::floor(ann.cx - a)) - margin;
    const int x1 = static_cast<int>(std::ceil(ann.cx + a)) + margin;
    const int y0 = static_cast<int>(std::floor(ann.cy - b)) - margin;
    const int y1 = static_cast<int>(std::ceil(ann.cy + b)) + margin;
    const int pw = x1 - x0 + 1;
    const int ph = y1 - y0 + 1;
    std::vector<double> patch(static_cast<std::size_t>(ph) * pw, 0.0);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = (static_cast<double>(x) - ann.cx) / a;
        const double dy = (static_cast<double>(y) - ann.cy) / b;
        if (dx * dx + dy * dy <= 1.0) {
          patch[static_cast<std::size_t>(y - y0) * pw + (x - x0)] = 1.0;
        }
      }
    }
    blur_patch(patch, ph, pw, sigma);
    double peak = 0.0;
    for (double v : patch) peak = std::max(peak, v);
    if (peak <= 0.0) continue;
    for (int y = std::max(y0, 0); y <= std::min(y1, h - 1); ++y) {
      for (int x = std::max(x0, 0); x <= std::min(x1, w - 1); ++x) {
        const float v =
            static_cast<float>(patch[static_cast<std::size_t>(y - y0) * pw + (x - x0)] / peak);
        float& dst = maps.heatmap.at({y, x});
        if (v > dst) dst = v;
      }
    }
  }

  // Dimension rectangles; later ids overwrite earlier ones on overlap.
  for (const auto& ann : annotations) {
    const double half_w = std::max(params.rect_scale * ann.w, 1.0) / 2.0;
    const double half_h = std::max(params.rect_scale * ann.h, 1.0) / 2.0;
    const float hv = static_cast<float>(ann.h / static_cast<double>(h));
    const float wv = static_cast<float>(ann.w / static_cast<double>(w));
    const int x0 = std::max(0, static_cast<int>(std::ceil(ann.cx - half_w)));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(ann.cx + half_w)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(ann.cy - half_h)));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(ann.cy + half_h)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        maps.height_map.at({y, x}) = hv;
        maps.width_map.at({y, x}) = wv;
      }
    }
  }
  return maps;
}

std::vector<Detection> decode(const Tensor& heatmap, const Tensor& height_map,
                              const Tensor& width_map, float threshold) {
  if (!heatmap.same_shape(height_map) || !heatmap.same_shape(width_map)) {
    throw std::invalid_argument("decode: map shapes disagree: " + heatmap.shape_str() + ", " +
                                height_map.shape_str() + ", " + width_map.shape_str());
  }
  if (heatmap.rank() != 2) {
    throw std::invalid_argument("decode: maps must be HxW, got " + heatmap.shape_str());
  }
  if (!(threshold > 0.0f && threshold < 1.0f)) {
    throw std::invalid_argument("decode: threshold must lie in (0,1)");
  }
  const int h = heatmap.dim(0), w = heatmap.dim(1);
  std::vector<int> component(static_cast<std::size_t>(h) * w, -1);
  std::vector<Detection> detections;
  std::vector<std::pair<int, int>> stack;

  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      const std::size_t sidx = static_cast<std::size_t>(sy) * w + sx;
      if (component[sidx] >= 0 || heatmap.at({sy, sx}) < threshold) continue;
      // Flood-fill one 8-connected component, tracking its argmax.
      const int comp = static_cast<int>(detections.size());
      component[sidx] = comp;
      stack.clear();
      stack.emplace_back(sy, sx);
      int best_y = sy, best_x = sx;
      float best_v = heatmap.at({sy, sx});
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        const float v = heatmap.at({y, x});
        if (v > best_v || (v == best_v && (y < best_y || (y == best_y && x < best_x)))) {
          best_v = v;
          best_y = y;
          best_x = x;
        }
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (component[nidx] >= 0 || heatmap.at({ny, nx}) < threshold) continue;
            component[nidx] = comp;
            stack.emplace_back(ny, nx);
          }
        }
      }
      Detection det;
      det.cx = best_x;
      det.cy = best_y;
      det.score = best_v;
      // Dimensions are stored normalized; clamp to at least one pixel.
      det.w = std::max(static_cast<double>(width_map.at({best_y, best_x})) * w, 1.0);
      det.h = std::max(static_cast<double>(height_map.at({best_y, best_x})) * h, 1.0);
      detections.push_back(det);
    }
  }
  std::sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    return a.cy != b.cy ? a.cy < b.cy : a.cx < b.cx;
  });
  return detections;
}

}  // namespace celldet
