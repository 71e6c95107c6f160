#include "celldet/data/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>

#include "celldet/common/rng.hpp"

namespace celldet {

const std::array<std::array<float, 3>, 16> kSpectralLut = {{
    {0.00f, 0.00f, 0.05f},  // near-black
    {0.05f, 0.00f, 0.45f},
    {0.00f, 0.25f, 0.85f},
    {0.00f, 0.60f, 1.00f},
    {0.00f, 0.90f, 0.90f},
    {0.00f, 0.85f, 0.45f},
    {0.10f, 0.90f, 0.10f},
    {0.45f, 1.00f, 0.00f},
    {0.90f, 1.00f, 0.00f},
    {1.00f, 0.85f, 0.00f},
    {1.00f, 0.60f, 0.00f},
    {1.00f, 0.25f, 0.00f},
    {0.95f, 0.00f, 0.30f},
    {0.95f, 0.25f, 0.85f},
    {0.90f, 0.65f, 0.95f},
    {0.99f, 0.99f, 0.99f},  // near-white
}};

Tensor pseudocolor(const Tensor& gray) {
  if (gray.rank() != 2) {
    throw std::invalid_argument("pseudocolor: expected HxW input, got " + gray.shape_str());
  }
  const int h = gray.dim(0), w = gray.dim(1);
  Tensor out({h, w, 3});
  const int last = static_cast<int>(kSpectralLut.size()) - 1;
  for (std::int64_t i = 0; i < gray.numel(); ++i) {
    float v = gray.data()[i];
    v = std::clamp(v, 0.0f, 1.0f);
    const float pos = v * static_cast<float>(last);
    const int lo = std::min(static_cast<int>(pos), last - 1);
    const float t = pos - static_cast<float>(lo);
    for (int c = 0; c < 3; ++c) {
      const float a = kSpectralLut[static_cast<std::size_t>(lo)][static_cast<std::size_t>(c)];
      const float b = kSpectralLut[static_cast<std::size_t>(lo) + 1][static_cast<std::size_t>(c)];
      out.data()[i * 3 + c] = a + (b - a) * t;
    }
  }
  return out;
}

Tensor minmax_normalize(const Tensor& image) {
  if (image.numel() == 0) return image;
  float mn = image.data()[0], mx = image.data()[0];
  for (std::int64_t i = 1; i < image.numel(); ++i) {
    mn = std::min(mn, image.data()[i]);
    mx = std::max(mx, image.data()[i]);
  }
  Tensor out(image.shape());
  if (mx <= mn) return out;  // constant image -> zeros
  const float inv = 1.0f / (mx - mn);
  for (std::int64_t i = 0; i < image.numel(); ++i) out.data()[i] = (image.data()[i] - mn) * inv;
  return out;
}

AugmentOp parse_augment_op(const std::string& name) {
  if (name == "shift") return AugmentOp::kShift;
  if (name == "rotate") return AugmentOp::kRotate;
  if (name == "grid_distortion") return AugmentOp::kGridDistortion;
  if (name == "elastic") return AugmentOp::kElastic;
  throw std::invalid_argument("augment: unknown op '" + name + "'");
}

std::string augment_op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::kShift: return "shift";
    case AugmentOp::kRotate: return "rotate";
    case AugmentOp::kGridDistortion: return "grid_distortion";
    case AugmentOp::kElastic: return "elastic";
  }
  return "?";
}

namespace {

float sample_bilinear(const Tensor& img, double sy, double sx) {
  const int h = img.dim(0), w = img.dim(1);
  if (sy < -0.5 || sy > h - 0.5 || sx < -0.5 || sx > w - 0.5) return 0.0f;
  const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x0 = static_cast<int>(std::floor(cx));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double ty = cy - y0, tx = cx - x0;
  const double v00 = img.at({y0, x0}), v01 = img.at({y0, x1});
  const double v10 = img.at({y1, x0}), v11 = img.at({y1, x1});
  return static_cast<float>((1.0 - ty) * ((1.0 - tx) * v00 + tx * v01) +
                            ty * ((1.0 - tx) * v10 + tx * v11));
}

std::uint16_t sample_nearest(const InstanceMask& mask, double sy, double sx) {
  const int y = static_cast<int>(std::lround(sy));
  const int x = static_cast<int>(std::lround(sx));
  if (y < 0 || y >= mask.h || x < 0 || x >= mask.w) return 0;
  return mask.at(y, x);
}

// Smoothed random displacement field for the elastic transform.
struct Field {
  int h, w;
  std::vector<double> dx, dy;
  double at_dx(int y, int x) const { return dx[static_cast<std::size_t>(y) * w + x]; }
  double at_dy(int y, int x) const { return dy[static_cast<std::size_t>(y) * w + x]; }
};

void gaussian_smooth(std::vector<double>& f, int h, int w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k) v /= sum;
  std::vector<double> tmp(f.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, w - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * f[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, h - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      f[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
}

}  // namespace

std::pair<Tensor, InstanceMask> augment(const Tensor& image, const InstanceMask& mask,
                                        AugmentOp op, const AugmentParams& params,
                                        std::uint64_t seed) {
  if (image.rank() != 2 || image.dim(0) != mask.h || image.dim(1) != mask.w) {
    throw std::invalid_argument("augment: image " + image.shape_str() + " and mask " +
                                std::to_string(mask.h) + "x" + std::to_string(mask.w) +
                                " must share spatial size");
  }
  const int h = mask.h, w = mask.w;

  // Inverse mapping from output pixel to source coordinates.
  std::function<void(int, int, double&, double&)> src;

  Field field;
  switch (op) {
    case AugmentOp::kShift:
      src = [&](int y, int x, double& sy, double& sx) {
        sy = y - params.shift_y;
        sx = x - params.shift_x;
      };
      break;
    case AugmentOp::kRotate: {
      const double rad = params.rotate_deg * 3.14159265358979323846 / 180.0;
      const double c = std::cos(rad), s = std::sin(rad);
      const double oy = (h - 1) / 2.0, ox = (w - 1) / 2.0;
      src = [=](int y, int x, double& sy, double& sx) {
        const double ry = y - oy, rx = x - ox;
        sx = ox + c * rx + s * ry;
        sy = oy - s * rx + c * ry;
      };
      break;
    }
    case AugmentOp::kGridDistortion: {
      const int cells = std::max(1, params.grid_cells);
      const int nodes = cells + 1;
      std::vector<double> ndx(static_cast<std::size_t>(nodes) * nodes);
      std::vector<double> ndy(ndx.size());
      Rng rng(seed);
      for (std::size_t i = 0; i < ndx.size(); ++i) {
        ndx[i] = rng.uniform(-static_cast<float>(params.grid_magnitude),
                             static_cast<float>(params.grid_magnitude));
        ndy[i] = rng.uniform(-static_cast<float>(params.grid_magnitude),
                             static_cast<float>(params.grid_magnitude));
      }
      const double cell_h = static_cast<double>(h - 1) / cells;
      const double cell_w = static_cast<double>(w - 1) / cells;
      src = [=](int y, int x, double& sy, double& sx) {
        const double gy = std::min(y / cell_h, static_cast<double>(cells) - 1e-9);
        const double gx = std::min(x / cell_w, static_cast<double>(cells) - 1e-9);
        const int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
        const double ty = gy - iy, tx = gx - ix;
        auto node = [&](const std::vector<double>& f, int ny, int nx) {
          return f[static_cast<std::size_t>(ny) * nodes + nx];
        };
        const double ddx = (1 - ty) * ((1 - tx) * node(ndx, iy, ix) + tx * node(ndx, iy, ix + 1)) +
                           ty * ((1 - tx) * node(ndx, iy + 1, ix) + tx * node(ndx, iy + 1, ix + 1));
        const double ddy = (1 - ty) * ((1 - tx) * node(ndy, iy, ix) + tx * node(ndy, iy, ix + 1)) +
                           ty * ((1 - tx) * node(ndy, iy + 1, ix) + tx * node(ndy, iy + 1, ix + 1));
        sx = x + ddx;
        sy = y + ddy;
      };
      break;
    }
    case AugmentOp::kElastic: {
      field.h = h;
      field.w = w;
      field.dx.resize(static_cast<std::size_t>(h) * w);
      field.dy.resize(field.dx.size());
      Rng rng(seed);
      for (std::size_t i = 0; i < field.dx.size(); ++i) {
        field.dx[i] = rng.uniform(-1.0f, 1.0f);
        field.dy[i] = rng.uniform(-1.0f, 1.0f);
      }
      gaussian_smooth(field.dx, h, w, params.elastic_sigma);
      gaussian_smooth(field.dy, h, w, params.elastic_sigma);
      // Normalize the smoothed field to unit peak before scaling by alpha.
      double peak = 1e-12;
      for (std::size_t i = 0; i < field.dx.size(); ++i) {
        peak = std::max({peak, std::fabs(field.dx[i]), std::fabs(field.dy[i])});
      }
      const double scale = params.elastic_alpha / peak;
      for (std::size_t i = 0; i < field.dx.size(); ++i) {
        field.dx[i] *= scale;
        field.dy[i] *= scale;
      }
      src = [&field](int y, int x, double& sy, double& sx) {
        sx = x + field.at_dx(y, x);
        sy = y + field.at_dy(y, x);
      };
      break;
    }
  }

  Tensor out_img({h, w});
  InstanceMask out_mask(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sy, sx;
      src(y, x, sy, sx);
      out_img.at({y, x}) = sample_bilinear(image, sy, sx);
      out_mask.at(y, x) = sample_nearest(mask, sy, sx);
    }
  }
  return {std::move(out_img), std::move(out_mask)};
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  if (image.rank() != 2) throw std::invalid_argument("resize_bilinear: expected HxW");
  const int h = image.dim(0), w = image.dim(1);
  if (h == out_h && w == out_w) return image;
  Tensor out({out_h, out_w});
  const double fy = static_cast<double>(h) / out_h;
  const double fx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double sy = std::clamp((y + 0.5) * fy - 0.5, 0.0, static_cast<double>(h - 1));
    for (int x = 0; x < out_w; ++x) {
      const double sx = std::clamp((x + 0.5) * fx - 0.5, 0.0, static_cast<double>(w - 1));
      out.at({y, x}) = sample_bilinear(image, sy, sx);
    }
  }
  return out;
}

InstanceMask resize_nearest(const InstanceMask& mask, int out_h, int out_w) {
  if (mask.h == out_h && mask.w == out_w) return mask;
  InstanceMask out(out_h, out_w);
  const double fy = static_cast<double>(mask.h) / out_h;
  const double fx = static_cast<double>(mask.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    // Half-pixel centers; floor picks the covering source pixel.
    const int sy = std::clamp(static_cast<int>((y + 0.5) * fy), 0, mask.h - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::clamp(static_cast<int>((x + 0.5) * fx), 0, mask.w - 1);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

SplitIndices split_dataset(int count, std::uint64_t seed) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(Rng::mix(seed, 0x5917));
  for (int i = count - 1; i > 0; --i) {
    const int j = rng.uniform_int(0, i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  SplitIndices s;
  const int n_train = count * 8 / 10;  // floor(0.8 n)
  const int n_val = count / 10;        // floor(0.1 n)
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.validation.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

}  // namespace celldet
