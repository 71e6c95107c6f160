#include "celldet/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "celldet/common/rng.hpp"

namespace celldet {

void SynthConfig::validate() const {
  if (image_size < 16) throw std::invalid_argument("SynthConfig: image_size too small");
  if (cell_count_min < 0 || cell_count_max < cell_count_min) {
    throw std::invalid_argument("SynthConfig: bad cell count range");
  }
  if (cell_axis_min < 3.0 || cell_axis_max < cell_axis_min) {
    throw std::invalid_argument("SynthConfig: cell axes must be >= 3 px");
  }
  if (intensity_max < intensity_min) throw std::invalid_argument("SynthConfig: bad intensity range");
  if (noise_std < 0.0f) throw std::invalid_argument("SynthConfig: negative noise");
}

SynthSample synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int size = cfg.image_size;

  SynthSample sample;
  sample.image = Tensor({size, size});
  sample.mask = InstanceMask(size, size);

  // Noisy background first.
  for (std::int64_t i = 0; i < sample.image.numel(); ++i) {
    const float v = cfg.background_level + rng.normal(0.0f, cfg.noise_std);
    sample.image.data()[i] = std::clamp(v, 0.0f, 1.0f);
  }

  const int count = rng.uniform_int(cfg.cell_count_min, cfg.cell_count_max);
  struct Placed {
    double cx, cy, rx, ry;
  };
  std::vector<Placed> placed;

  for (int cell = 0; cell < count; ++cell) {
    const double w = rng.uniform(static_cast<float>(cfg.cell_axis_min),
                                 static_cast<float>(cfg.cell_axis_max));
    const double h = rng.uniform(static_cast<float>(cfg.cell_axis_min),
                                 static_cast<float>(cfg.cell_axis_max));
    const double rx = w / 2.0, ry = h / 2.0;
    const double margin = std::max(rx, ry) + 1.0;
    if (2.0 * margin >= static_cast<double>(size)) {
      throw std::invalid_argument("synth_generate: cell axes " + std::to_string(w) + "x" +
                                  std::to_string(h) + " do not fit image size " +
                                  std::to_string(size));
    }
    bool ok = false;
    double cx = 0.0, cy = 0.0;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      cx = rng.uniform(static_cast<float>(margin), static_cast<float>(size - margin));
      cy = rng.uniform(static_cast<float>(margin), static_cast<float>(size - margin));
      ok = true;
      // Centroid separation at least the larger full axis of the pair.
      for (const auto& p : placed) {
        const double sep = std::hypot(cx - p.cx, cy - p.cy);
        const double need = std::max({w, h, 2.0 * p.rx, 2.0 * p.ry});
        if (sep < need) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) {
      throw std::runtime_error(
          "synth_generate: placement failed after 1000 attempts (over-dense config: size " +
          std::to_string(size) + ", cells " + std::to_string(count) + ", axes up to " +
          std::to_string(cfg.cell_axis_max) + ")");
    }
    placed.push_back({cx, cy, rx, ry});

    const float peak = rng.uniform(cfg.intensity_min, cfg.intensity_max);
    const std::uint16_t label = static_cast<std::uint16_t>(cell + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + rx)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + ry)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = (static_cast<double>(x) - cx) / rx;
        const double dy = (static_cast<double>(y) - cy) / ry;
        const double rho2 = dx * dx + dy * dy;
        if (rho2 > 1.0) continue;
        sample.mask.at(y, x) = label;
        // Smooth dome profile over the noisy background.
        const float dome = static_cast<float>(std::sqrt(1.0 - rho2));
        float& px = sample.image.at({y, x});
        px = std::clamp(px + (peak - cfg.background_level) * dome, 0.0f, 1.0f);
      }
    }
    CellAnnotation ann;
    ann.id = label;
    ann.cx = cx;
    ann.cy = cy;
    ann.w = w;
    ann.h = h;
    sample.planted.push_back(ann);
  }
  return sample;
}

}  // namespace celldet
