#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "celldet/tensor/gemm.hpp"
#include "celldet/tensor/graph.hpp"

namespace celldet {

namespace {

struct ConvGeom {
  int n, h, w, cin;
  int kh, kw, cout;
  int stride;
  int oh, ow;
  int pad_top, pad_left;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, int stride, Padding padding) {
  if (x.rank() != 4) {
    throw std::invalid_argument("conv2d: input must be NHWC, got " + x.shape_str());
  }
  if (w.rank() != 4) {
    throw std::invalid_argument("conv2d: weights must be [Kh,Kw,Cin,Cout], got " + w.shape_str());
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvGeom g;
  g.n = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cin = x.dim(3);
  g.kh = w.dim(0);
  g.kw = w.dim(1);
  g.cout = w.dim(3);
  g.stride = stride;
  if (w.dim(2) != g.cin) {
    throw std::invalid_argument("conv2d: input channels " + x.shape_str() +
                                " do not match kernel " + w.shape_str());
  }
  if (padding == Padding::kSame) {
    g.oh = (g.h + stride - 1) / stride;
    g.ow = (g.w + stride - 1) / stride;
    const int pad_h = std::max((g.oh - 1) * stride + g.kh - g.h, 0);
    const int pad_w = std::max((g.ow - 1) * stride + g.kw - g.w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (g.h < g.kh || g.w < g.kw) {
      throw std::invalid_argument("conv2d: valid padding needs input " + x.shape_str() +
                                  " at least as large as kernel " + w.shape_str());
    }
    g.oh = (g.h - g.kh) / stride + 1;
    g.ow = (g.w - g.kw) / stride + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

// Lowers one image into [oh*ow, kh*kw*cin] patch rows.
void im2col(const float* img, const ConvGeom& g, float* col) {
  const int krow = g.kh * g.kw * g.cin;
#pragma omp parallel for schedule(static) if (g.oh > 4)
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      float* row = col + (static_cast<long>(oy) * g.ow + ox) * krow;
      int idx = 0;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int y = oy * g.stride - g.pad_top + ky;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int x = ox * g.stride - g.pad_left + kx;
          if (y < 0 || y >= g.h || x < 0 || x >= g.w) {
            std::memset(row + idx, 0, sizeof(float) * static_cast<std::size_t>(g.cin));
          } else {
            std::memcpy(row + idx, img + (static_cast<long>(y) * g.w + x) * g.cin,
                        sizeof(float) * static_cast<std::size_t>(g.cin));
          }
          idx += g.cin;
        }
      }
    }
  }
}

// Scatter-adds patch-row gradients back onto the input image; serial by design.
void col2im_add(const float* col, const ConvGeom& g, float* img) {
  const int krow = g.kh * g.kw * g.cin;
  for (int oy = 0; oy < g.oh; ++oy) {
    for (int ox = 0; ox < g.ow; ++ox) {
      const float* row = col + (static_cast<long>(oy) * g.ow + ox) * krow;
      int idx = 0;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int y = oy * g.stride - g.pad_top + ky;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int x = ox * g.stride - g.pad_left + kx;
          if (y >= 0 && y < g.h && x >= 0 && x < g.w) {
            float* dst = img + (static_cast<long>(y) * g.w + x) * g.cin;
            for (int ci = 0; ci < g.cin; ++ci) dst[ci] += row[idx + ci];
          }
          idx += g.cin;
        }
      }
    }
  }
}

}  // namespace

Var Graph::conv2d(Var x, Var w, Var b, int stride, Padding padding) {
  check_var(x, "conv2d");
  check_var(w, "conv2d");
  check_var(b, "conv2d");
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  const Tensor& tb = value(b);
  const ConvGeom g = conv_geometry(tx, tw, stride, padding);
  if (tb.numel() != g.cout) {
    throw std::invalid_argument("conv2d: bias " + tb.shape_str() + " does not match kernel " +
                                tw.shape_str());
  }
  const int krow = g.kh * g.kw * g.cin;
  const std::int64_t img_sz = static_cast<std::int64_t>(g.h) * g.w * g.cin;
  const std::int64_t out_sz = static_cast<std::int64_t>(g.oh) * g.ow * g.cout;
  Tensor out({g.n, g.oh, g.ow, g.cout});
  std::vector<float> col(static_cast<std::size_t>(g.oh) * g.ow * krow);
  for (int ni = 0; ni < g.n; ++ni) {
    im2col(tx.data() + ni * img_sz, g, col.data());
    float* po = out.data() + ni * out_sz;
    sgemm_nn(g.oh * g.ow, g.cout, krow, col.data(), krow, tw.data(), g.cout, po, g.cout, false);
    for (int r = 0; r < g.oh * g.ow; ++r) {
      for (int co = 0; co < g.cout; ++co) po[static_cast<long>(r) * g.cout + co] += tb.data()[co];
    }
  }
  const int id = push(std::move(out), {x.id, w.id, b.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, w, b, g, krow, img_sz, out_sz] {
    const Tensor& gout = nodes_[static_cast<std::size_t>(id)].grad;
    const Tensor& tx2 = value(x);
    const Tensor& tw2 = value(w);
    const bool need_x = nodes_[static_cast<std::size_t>(x.id)].requires_grad;
    const bool need_w = nodes_[static_cast<std::size_t>(w.id)].requires_grad;
    const bool need_b = nodes_[static_cast<std::size_t>(b.id)].requires_grad;
    Tensor* gx = need_x ? &grad_buf(x.id) : nullptr;
    Tensor* gw = need_w ? &grad_buf(w.id) : nullptr;
    Tensor* gb = need_b ? &grad_buf(b.id) : nullptr;
    std::vector<float> col(static_cast<std::size_t>(g.oh) * g.ow * krow);
    std::vector<float> dcol;
    if (need_x) dcol.resize(col.size());
    for (int ni = 0; ni < g.n; ++ni) {
      const float* pg = gout.data() + ni * out_sz;
      if (need_w) {
        im2col(tx2.data() + ni * img_sz, g, col.data());
        // dW[kr, co] += col^T * dY, accumulated image by image.
        sgemm_tn(krow, g.cout, g.oh * g.ow, col.data(), krow, pg, g.cout, gw->data(), g.cout, true);
      }
      if (need_b) {
        for (int r = 0; r < g.oh * g.ow; ++r) {
          for (int co = 0; co < g.cout; ++co) gb->data()[co] += pg[static_cast<long>(r) * g.cout + co];
        }
      }
      if (need_x) {
        // dcol = dY * W^T, then scatter back onto the image.
        sgemm_nt(g.oh * g.ow, krow, g.cout, pg, g.cout, tw2.data(), g.cout, dcol.data(), krow,
                 false);
        col2im_add(dcol.data(), g, gx->data() + ni * img_sz);
      }
    }
  };
  return Var{id};
}

Var Graph::bilinear_upsample(Var x, int factor) {
  check_var(x, "bilinear_upsample");
  const Tensor& tx = value(x);
  if (tx.rank() != 4) {
    throw std::invalid_argument("bilinear_upsample: input must be NHWC, got " + tx.shape_str());
  }
  if (factor < 2) {
    throw std::invalid_argument("bilinear_upsample: factor must be >= 2, got " +
                                std::to_string(factor));
  }
  const int n = tx.dim(0), h = tx.dim(1), w = tx.dim(2), c = tx.dim(3);
  const int oh = h * factor, ow = w * factor;
  Tensor out({n, oh, ow, c});
  // Half-pixel centers: src = (dst + 0.5)/factor - 0.5, clamped to the frame.
  auto src_coord = [](int dst, int factor, int limit) {
    double s = (static_cast<double>(dst) + 0.5) / factor - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > static_cast<double>(limit - 1)) s = static_cast<double>(limit - 1);
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, limit - 1);
    const float t = static_cast<float>(s - lo);
    return std::tuple<int, int, float>(lo, hi, t);
  };
#pragma omp parallel for schedule(static) if (n * oh > 8)
  for (long row = 0; row < static_cast<long>(n) * oh; ++row) {
    const int ni = static_cast<int>(row / oh);
    const int oy = static_cast<int>(row % oh);
    auto [y0, y1, ty] = src_coord(oy, factor, h);
    const float* img = tx.data() + static_cast<long>(ni) * h * w * c;
    float* orow = out.data() + (static_cast<long>(ni) * oh + oy) * ow * c;
    for (int ox = 0; ox < ow; ++ox) {
      auto [x0, x1, txf] = src_coord(ox, factor, w);
      const float* p00 = img + (static_cast<long>(y0) * w + x0) * c;
      const float* p01 = img + (static_cast<long>(y0) * w + x1) * c;
      const float* p10 = img + (static_cast<long>(y1) * w + x0) * c;
      const float* p11 = img + (static_cast<long>(y1) * w + x1) * c;
      const float w00 = (1.0f - ty) * (1.0f - txf);
      const float w01 = (1.0f - ty) * txf;
      const float w10 = ty * (1.0f - txf);
      const float w11 = ty * txf;
      for (int ci = 0; ci < c; ++ci) {
        orow[static_cast<long>(ox) * c + ci] =
            w00 * p00[ci] + w01 * p01[ci] + w10 * p10[ci] + w11 * p11[ci];
      }
    }
  }
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, n, h, w, c, oh, ow, factor, src_coord] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    Tensor& gx = grad_buf(x.id);
    for (int ni = 0; ni < n; ++ni) {
      float* gimg = gx.data() + static_cast<long>(ni) * h * w * c;
      for (int oy = 0; oy < oh; ++oy) {
        auto [y0, y1, ty] = src_coord(oy, factor, h);
        const float* grow = g.data() + (static_cast<long>(ni) * oh + oy) * ow * c;
        for (int ox = 0; ox < ow; ++ox) {
          auto [x0, x1, txf] = src_coord(ox, factor, w);
          const float w00 = (1.0f - ty) * (1.0f - txf);
          const float w01 = (1.0f - ty) * txf;
          const float w10 = ty * (1.0f - txf);
          const float w11 = ty * txf;
          for (int ci = 0; ci < c; ++ci) {
            const float gv = grow[static_cast<long>(ox) * c + ci];
            gimg[(static_cast<long>(y0) * w + x0) * c + ci] += w00 * gv;
            gimg[(static_cast<long>(y0) * w + x1) * c + ci] += w01 * gv;
            gimg[(static_cast<long>(y1) * w + x0) * c + ci] += w10 * gv;
            gimg[(static_cast<long>(y1) * w + x1) * c + ci] += w11 * gv;
          }
        }
      }
    }
  };
  return Var{id};
}

namespace {

void check_unfold_shape(const Tensor& x, int patch) {
  if (x.rank() != 4 || x.dim(0) != 1) {
    throw std::invalid_argument("unfold: input must be [1,H,W,C], got " + x.shape_str());
  }
  if (patch < 1) throw std::invalid_argument("unfold: patch must be >= 1");
  if (x.dim(1) % patch != 0 || x.dim(2) % patch != 0) {
    throw std::invalid_argument("unfold: spatial dims of " + x.shape_str() +
                                " not divisible by patch " + std::to_string(patch));
  }
}

}  // namespace

Var Graph::unfold(Var x, int patch) {
  check_var(x, "unfold");
  const Tensor& tx = value(x);
  check_unfold_shape(tx, patch);
  const int h = tx.dim(1), w = tx.dim(2), c = tx.dim(3);
  const int ph = h / patch, pw = w / patch;
  const int groups = patch * patch;       // intra-patch offsets
  const int tokens = ph * pw;             // one token per patch
  Tensor out({groups, tokens, c});
  for (int di = 0; di < patch; ++di) {
    for (int dj = 0; dj < patch; ++dj) {
      const int gidx = di * patch + dj;
      for (int pi = 0; pi < ph; ++pi) {
        for (int pj = 0; pj < pw; ++pj) {
          const float* src = tx.data() + ((static_cast<long>(pi) * patch + di) * w +
                                          (static_cast<long>(pj) * patch + dj)) *
                                             c;
          float* dst = out.data() + ((static_cast<long>(gidx) * tokens) + pi * pw + pj) * c;
          std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(c));
        }
      }
    }
  }
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, h, w, c, patch, ph, pw, tokens] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    Tensor& gx = grad_buf(x.id);
    for (int di = 0; di < patch; ++di) {
      for (int dj = 0; dj < patch; ++dj) {
        const int gidx = di * patch + dj;
        for (int pi = 0; pi < ph; ++pi) {
          for (int pj = 0; pj < pw; ++pj) {
            const float* src = g.data() + ((static_cast<long>(gidx) * tokens) + pi * pw + pj) * c;
            float* dst = gx.data() + ((static_cast<long>(pi) * patch + di) * w +
                                      (static_cast<long>(pj) * patch + dj)) *
                                         c;
            for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
          }
        }
      }
    }
  };
  return Var{id};
}

Var Graph::fold(Var seq, int height, int width, int patch) {
  check_var(seq, "fold");
  const Tensor& ts = value(seq);
  if (ts.rank() != 3) {
    throw std::invalid_argument("fold: sequence must be [patch^2, tokens, C], got " +
                                ts.shape_str());
  }
  if (patch < 1 || height % patch != 0 || width % patch != 0) {
    throw std::invalid_argument("fold: target " + std::to_string(height) + "x" +
                                std::to_string(width) + " not divisible by patch " +
                                std::to_string(patch));
  }
  const int ph = height / patch, pw = width / patch;
  const int c = ts.dim(2);
  if (ts.dim(0) != patch * patch || ts.dim(1) != ph * pw) {
    throw std::invalid_argument("fold: sequence " + ts.shape_str() + " does not match target " +
                                std::to_string(height) + "x" + std::to_string(width) + " patch " +
                                std::to_string(patch));
  }
  const int tokens = ph * pw;
  Tensor out({1, height, width, c});
  for (int di = 0; di < patch; ++di) {
    for (int dj = 0; dj < patch; ++dj) {
      const int gidx = di * patch + dj;
      for (int pi = 0; pi < ph; ++pi) {
        for (int pj = 0; pj < pw; ++pj) {
          const float* src = ts.data() + ((static_cast<long>(gidx) * tokens) + pi * pw + pj) * c;
          float* dst = out.data() + ((static_cast<long>(pi) * patch + di) * width +
                                     (static_cast<long>(pj) * patch + dj)) *
                                        c;
          std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(c));
        }
      }
    }
  }
  const int id = push(std::move(out), {seq.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, seq, height, width, c, patch, ph, pw,
                                               tokens] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    Tensor& gs = grad_buf(seq.id);
    for (int di = 0; di < patch; ++di) {
      for (int dj = 0; dj < patch; ++dj) {
        const int gidx = di * patch + dj;
        for (int pi = 0; pi < ph; ++pi) {
          for (int pj = 0; pj < pw; ++pj) {
            const float* src = g.data() + ((static_cast<long>(pi) * patch + di) * width +
                                           (static_cast<long>(pj) * patch + dj)) *
                                              c;
            float* dst = gs.data() + ((static_cast<long>(gidx) * tokens) + pi * pw + pj) * c;
            for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
          }
        }
      }
    }
  };
  return Var{id};
}

}  // namespace celldet
