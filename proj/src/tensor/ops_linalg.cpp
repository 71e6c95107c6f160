#include <cmath>
#include <memory>
#include <stdexcept>

#include "celldet/tensor/gemm.hpp"
#include "celldet/tensor/graph.hpp"

namespace celldet {

namespace {

int resolve_axis(int axis, int rank, const char* op) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(rank));
  }
  return a;
}

struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t n = 1;
  std::int64_t inner = 1;
};

AxisSplit split_at(const std::vector<int>& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.n = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) {
    s.inner *= shape[i];
  }
  return s;
}

}  // namespace

Var Graph::matmul(Var a, Var b, bool transpose_b) {
  check_var(a, "matmul");
  check_var(b, "matmul");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() < 2 || tb.rank() < 2) {
    throw std::invalid_argument("matmul: need rank >= 2, got " + ta.shape_str() + " and " +
                                tb.shape_str());
  }
  const int m = ta.dim(-2);
  const int k = ta.dim(-1);
  const int bk = transpose_b ? tb.dim(-1) : tb.dim(-2);
  const int n = transpose_b ? tb.dim(-2) : tb.dim(-1);
  if (bk != k) {
    throw std::invalid_argument("matmul: inner dims disagree, " + ta.shape_str() + " vs " +
                                tb.shape_str());
  }
  const bool batched_b = tb.rank() > 2;
  const std::int64_t groups = ta.numel() / (static_cast<std::int64_t>(m) * k);
  if (batched_b) {
    const std::int64_t bg = tb.numel() / (static_cast<std::int64_t>(tb.dim(-2)) * tb.dim(-1));
    if (bg != groups || !std::equal(ta.shape().begin(), ta.shape().end() - 2, tb.shape().begin())) {
      throw std::invalid_argument("matmul: batch dims disagree, " + ta.shape_str() + " vs " +
                                  tb.shape_str());
    }
  }
  std::vector<int> out_shape(ta.shape().begin(), ta.shape().end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape);

  const std::int64_t a_sz = static_cast<std::int64_t>(m) * k;
  const std::int64_t b_sz = static_cast<std::int64_t>(tb.dim(-2)) * tb.dim(-1);
  const std::int64_t o_sz = static_cast<std::int64_t>(m) * n;
  const bool par_groups = groups >= 4;
#pragma omp parallel for schedule(static) if (par_groups)
  for (std::int64_t g = 0; g < groups; ++g) {
    const float* pa = ta.data() + g * a_sz;
    const float* pb = tb.data() + (batched_b ? g * b_sz : 0);
    float* po = out.data() + g * o_sz;
    if (transpose_b) {
      sgemm_nt(m, n, k, pa, k, pb, k, po, n, false, !par_groups);
    } else {
      sgemm_nn(m, n, k, pa, k, pb, n, po, n, false, !par_groups);
    }
  }

  const int id = push(std::move(out), {a.id, b.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b, transpose_b, batched_b, groups, m, n,
                                               k, a_sz, b_sz, o_sz] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    const Tensor& ta2 = value(a);
    const Tensor& tb2 = value(b);
    if (nodes_[static_cast<std::size_t>(a.id)].requires_grad) {
      Tensor& ga = grad_buf(a.id);
      const bool par = groups >= 4;
#pragma omp parallel for schedule(static) if (par)
      for (std::int64_t gi = 0; gi < groups; ++gi) {
        const float* pg = g.data() + gi * o_sz;
        const float* pb = tb2.data() + (batched_b ? gi * b_sz : 0);
        float* pga = ga.data() + gi * a_sz;
        if (transpose_b) {
          // C = A*B^T  =>  dA = dC * B
          sgemm_nn(m, k, n, pg, n, pb, k, pga, k, true, !par);
        } else {
          // C = A*B    =>  dA = dC * B^T
          sgemm_nt(m, k, n, pg, n, pb, n, pga, k, true, !par);
        }
      }
    }
    if (nodes_[static_cast<std::size_t>(b.id)].requires_grad) {
      Tensor& gb = grad_buf(b.id);
      // Accumulate group contributions serially for a fixed reduction order.
      for (std::int64_t gi = 0; gi < groups; ++gi) {
        const float* pg = g.data() + gi * o_sz;
        const float* pa = ta2.data() + gi * a_sz;
        float* pgb = gb.data() + (batched_b ? gi * b_sz : 0);
        if (transpose_b) {
          // dB = dC^T * A  (B is [n,k])
          sgemm_tn(n, k, m, pg, n, pa, k, pgb, k, true);
        } else {
          // dB = A^T * dC  (B is [k,n])
          sgemm_tn(k, n, m, pa, k, pg, n, pgb, n, true);
        }
      }
    }
  };
  return Var{id};
}

Var Graph::softmax(Var x, int axis) {
  check_var(x, "softmax");
  const Tensor& tx = value(x);
  const int ax = resolve_axis(axis, tx.rank(), "softmax");
  const AxisSplit s = split_at(tx.shape(), ax);
  Tensor out(tx.shape());
  const float* px = tx.data();
  float* po = out.data();
#pragma omp parallel for schedule(static) if (s.outer * s.inner > 8)
  for (std::int64_t oi = 0; oi < s.outer * s.inner; ++oi) {
    const std::int64_t o = oi / s.inner;
    const std::int64_t in = oi % s.inner;
    const std::int64_t base = o * s.n * s.inner + in;
    float mx = px[base];
    for (std::int64_t j = 1; j < s.n; ++j) mx = std::max(mx, px[base + j * s.inner]);
    double denom = 0.0;
    for (std::int64_t j = 0; j < s.n; ++j) {
      const float e = std::exp(px[base + j * s.inner] - mx);
      po[base + j * s.inner] = e;
      denom += e;
    }
    const float inv = static_cast<float>(1.0 / denom);
    for (std::int64_t j = 0; j < s.n; ++j) po[base + j * s.inner] *= inv;
  }
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, s] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    const Tensor& y = nodes_[static_cast<std::size_t>(id)].out;
    Tensor& gx = grad_buf(x.id);
    const float* pg = g.data();
    const float* py = y.data();
    float* pgx = gx.data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t in = 0; in < s.inner; ++in) {
        const std::int64_t base = o * s.n * s.inner + in;
        double dot = 0.0;
        for (std::int64_t j = 0; j < s.n; ++j) {
          const std::int64_t p = base + j * s.inner;
          dot += static_cast<double>(pg[p]) * static_cast<double>(py[p]);
        }
        for (std::int64_t j = 0; j < s.n; ++j) {
          const std::int64_t p = base + j * s.inner;
          pgx[p] += py[p] * (pg[p] - static_cast<float>(dot));
        }
      }
    }
  };
  return Var{id};
}

Var Graph::layer_norm(Var x, Var gain, Var bias, int axis, float eps) {
  check_var(x, "layer_norm");
  check_var(gain, "layer_norm");
  check_var(bias, "layer_norm");
  const Tensor& tx = value(x);
  const int ax = resolve_axis(axis, tx.rank(), "layer_norm");
  const AxisSplit s = split_at(tx.shape(), ax);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  if (tg.numel() != s.n || tb.numel() != s.n) {
    throw std::invalid_argument("layer_norm: gain/bias must have " + std::to_string(s.n) +
                                " elements, got " + tg.shape_str() + " and " + tb.shape_str());
  }
  Tensor out(tx.shape());
  // Per-slice statistics retained for backward.
  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.outer * s.inner));
  auto istd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.outer * s.inner));
  const float* px = tx.data();
  float* po = out.data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t in = 0; in < s.inner; ++in) {
      const std::int64_t base = o * s.n * s.inner + in;
      const std::int64_t slice = o * s.inner + in;
      double mu = 0.0;
      for (std::int64_t j = 0; j < s.n; ++j) mu += px[base + j * s.inner];
      mu /= static_cast<double>(s.n);
      double var = 0.0;
      for (std::int64_t j = 0; j < s.n; ++j) {
        const double d = px[base + j * s.inner] - mu;
        var += d * d;
      }
      var /= static_cast<double>(s.n);
      const double is = 1.0 / std::sqrt(var + eps);
      (*mean)[static_cast<std::size_t>(slice)] = mu;
      (*istd)[static_cast<std::size_t>(slice)] = is;
      for (std::int64_t j = 0; j < s.n; ++j) {
        const double xh = (px[base + j * s.inner] - mu) * is;
        po[base + j * s.inner] = static_cast<float>(
            xh * static_cast<double>(tg.data()[j]) + static_cast<double>(tb.data()[j]));
      }
    }
  }
  const int id = push(std::move(out), {x.id, gain.id, bias.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, gain, bias, s, mean, istd] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    const Tensor& tx2 = value(x);
    const Tensor& tg2 = value(gain);
    const bool need_x = nodes_[static_cast<std::size_t>(x.id)].requires_grad;
    const bool need_g = nodes_[static_cast<std::size_t>(gain.id)].requires_grad;
    const bool need_b = nodes_[static_cast<std::size_t>(bias.id)].requires_grad;
    Tensor* gx = need_x ? &grad_buf(x.id) : nullptr;
    Tensor* gg = need_g ? &grad_buf(gain.id) : nullptr;
    Tensor* gb = need_b ? &grad_buf(bias.id) : nullptr;
    const float* pg = g.data();
    const float* px2 = tx2.data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t in = 0; in < s.inner; ++in) {
        const std::int64_t base = o * s.n * s.inner + in;
        const std::int64_t slice = o * s.inner + in;
        const double mu = (*mean)[static_cast<std::size_t>(slice)];
        const double is = (*istd)[static_cast<std::size_t>(slice)];
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (std::int64_t j = 0; j < s.n; ++j) {
          const std::int64_t p = base + j * s.inner;
          const double xh = (px2[p] - mu) * is;
          const double dxh = static_cast<double>(pg[p]) * tg2.data()[j];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
          if (gg) gg->data()[j] += static_cast<float>(static_cast<double>(pg[p]) * xh);
          if (gb) gb->data()[j] += pg[p];
        }
        if (gx) {
          const double nn = static_cast<double>(s.n);
          for (std::int64_t j = 0; j < s.n; ++j) {
            const std::int64_t p = base + j * s.inner;
            const double xh = (px2[p] - mu) * is;
            const double dxh = static_cast<double>(pg[p]) * tg2.data()[j];
            gx->data()[p] +=
                static_cast<float>(is * (dxh - sum_dxh / nn - xh * sum_dxh_xh / nn));
          }
        }
      }
    }
  };
  return Var{id};
}

Var Graph::batch_norm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
                      bool training, float momentum, float eps) {
  check_var(x, "batch_norm");
  check_var(gamma, "batch_norm");
  check_var(beta, "batch_norm");
  const Tensor& tx = value(x);
  const int c = tx.dim(-1);
  const std::int64_t rows = tx.numel() / c;
  const Tensor& tg = value(gamma);
  const Tensor& tb = value(beta);
  if (tg.numel() != c || tb.numel() != c || running_mean.numel() != c || running_var.numel() != c) {
    throw std::invalid_argument("batch_norm: per-channel arrays must have " + std::to_string(c) +
                                " elements for input " + tx.shape_str());
  }
  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c), 0.0);
  auto istd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c), 0.0);
  if (training) {
#pragma omp parallel for schedule(static) if (c >= 8)
    for (int j = 0; j < c; ++j) {
      double mu = 0.0;
      for (std::int64_t r = 0; r < rows; ++r) mu += tx.data()[r * c + j];
      mu /= static_cast<double>(rows);
      double var = 0.0;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double d = tx.data()[r * c + j] - mu;
        var += d * d;
      }
      var /= static_cast<double>(rows);
      (*mean)[static_cast<std::size_t>(j)] = mu;
      (*istd)[static_cast<std::size_t>(j)] = 1.0 / std::sqrt(var + eps);
      running_mean.data()[j] =
          momentum * running_mean.data()[j] + (1.0f - momentum) * static_cast<float>(mu);
      running_var.data()[j] =
          momentum * running_var.data()[j] + (1.0f - momentum) * static_cast<float>(var);
    }
  } else {
    for (int j = 0; j < c; ++j) {
      (*mean)[static_cast<std::size_t>(j)] = running_mean.data()[j];
      (*istd)[static_cast<std::size_t>(j)] =
          1.0 / std::sqrt(static_cast<double>(running_var.data()[j]) + eps);
    }
  }
  Tensor out(tx.shape());
  {
    const float* px = tx.data();
    float* po = out.data();
    const float* pgam = tg.data();
    const float* pbet = tb.data();
    const double* pmean = mean->data();
    const double* pistd = istd->data();
    const int cc = c;
#pragma omp parallel for schedule(static) if (rows > 64)
    for (std::int64_t r = 0; r < rows; ++r) {
      for (int j = 0; j < cc; ++j) {
        const double xh = (px[r * cc + j] - pmean[j]) * pistd[j];
        po[r * cc + j] = static_cast<float>(xh * static_cast<double>(pgam[j]) +
                                            static_cast<double>(pbet[j]));
      }
    }
  }
  const int id = push(std::move(out), {x.id, gamma.id, beta.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, gamma, beta, rows, c, mean, istd,
                                               training] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    const Tensor& tx2 = value(x);
    const Tensor& tg2 = value(gamma);
    const bool need_x = nodes_[static_cast<std::size_t>(x.id)].requires_grad;
    const bool need_g = nodes_[static_cast<std::size_t>(gamma.id)].requires_grad;
    const bool need_b = nodes_[static_cast<std::size_t>(beta.id)].requires_grad;
    Tensor* gx = need_x ? &grad_buf(x.id) : nullptr;
    Tensor* gg = need_g ? &grad_buf(gamma.id) : nullptr;
    Tensor* gb = need_b ? &grad_buf(beta.id) : nullptr;
    const float* pg = g.data();
    const float* px2 = tx2.data();
    const float* pgam = tg2.data();
    const double* pmean = mean->data();
    const double* pistd = istd->data();
    const int cc = c;
    const std::int64_t nrows = rows;
    const bool train_mode = training;
#pragma omp parallel for schedule(static) if (cc >= 8)
    for (int j = 0; j < cc; ++j) {
      const double mu = pmean[j];
      const double is = pistd[j];
      double sum_dxh = 0.0, sum_dxh_xh = 0.0, sum_dy = 0.0, sum_dy_xh = 0.0;
      for (std::int64_t r = 0; r < nrows; ++r) {
        const std::int64_t p = r * cc + j;
        const double xh = (px2[p] - mu) * is;
        const double dxh = static_cast<double>(pg[p]) * pgam[j];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xh;
        sum_dy += pg[p];
        sum_dy_xh += static_cast<double>(pg[p]) * xh;
      }
      if (gg) gg->data()[j] += static_cast<float>(sum_dy_xh);
      if (gb) gb->data()[j] += static_cast<float>(sum_dy);
      if (gx) {
        const double nn = static_cast<double>(nrows);
        for (std::int64_t r = 0; r < nrows; ++r) {
          const std::int64_t p = r * cc + j;
          const double xh = (px2[p] - mu) * is;
          const double dxh = static_cast<double>(pg[p]) * pgam[j];
          if (train_mode) {
            gx->data()[p] +=
                static_cast<float>(is * (dxh - sum_dxh / nn - xh * sum_dxh_xh / nn));
          } else {
            // Fixed statistics: the normalization is a per-channel affine map.
            gx->data()[p] += static_cast<float>(dxh * is);
          }
        }
      }
    }
  };
  return Var{id};
}

}  // namespace celldet
