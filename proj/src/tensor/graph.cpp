#include "celldet/tensor/graph.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace celldet {

namespace {

// Resolves a possibly-negative axis, throwing on out-of-range.
int resolve_axis(int axis, int rank, const char* op) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(rank));
  }
  return a;
}

}  // namespace

int Graph::push(Tensor out, const std::vector<int>& inputs) {
  Node n;
  n.out = std::move(out);
  for (int id : inputs) {
    if (nodes_[static_cast<std::size_t>(id)].requires_grad) n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.out.shape());
    n.grad_alloc = true;
  }
  return n.grad;
}

void Graph::accum(int id, const Tensor& delta) {
  Tensor& g = grad_buf(id);
  const float* src = delta.data();
  float* dst = g.data();
  const std::int64_t n = g.numel();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

const Graph::Node& Graph::node(Var v) const {
  check_var(v, "Graph::node");
  return nodes_[static_cast<std::size_t>(v.id)];
}

void Graph::check_var(Var v, const char* op) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument(std::string(op) + ": invalid Var");
  }
}

const Tensor& Graph::value(Var v) const { return node(v).out; }

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad_alloc) return Tensor(n.out.shape());
  return n.grad;
}

Tensor Graph::grad(const std::string& param_name) const { return grad(param_var(param_name)); }

Var Graph::param_var(const std::string& name) const {
  auto it = param_ids_.find(name);
  if (it == param_ids_.end()) {
    throw std::invalid_argument("Graph: unknown parameter '" + name + "'");
  }
  return Var{it->second};
}

Var Graph::constant(Tensor value) {
  const int id = push(std::move(value), {});
  return Var{id};
}

Var Graph::parameter(const std::string& name, const Tensor& value) {
  auto it = param_ids_.find(name);
  if (it != param_ids_.end()) return Var{it->second};
  const int id = push(value, {});
  nodes_[static_cast<std::size_t>(id)].requires_grad = true;
  param_ids_.emplace(name, id);
  param_order_.push_back(name);
  return Var{id};
}

void Graph::backward(Var loss) {
  check_var(loss, "backward");
  if (node(loss).out.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + node(loss).out.shape_str());
  }
  for (auto& n : nodes_) {
    n.grad = Tensor();
    n.grad_alloc = false;
  }
  grad_buf(loss.id).data()[0] = 1.0f;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.grad_alloc && n.back) n.back();
  }
}

// ---------------------------------------------------------------------------
// elementwise & shape ops
// ---------------------------------------------------------------------------

Var Graph::add(Var a, Var b) {
  check_var(a, "add");
  check_var(b, "add");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const bool same = ta.same_shape(tb);
  // Trailing broadcast: b's shape must be a suffix of a's.
  std::int64_t rep = 1;
  if (!same) {
    const auto& sa = ta.shape();
    const auto& sb = tb.shape();
    if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
      throw std::invalid_argument("add: incompatible shapes " + ta.shape_str() + " vs " +
                                  tb.shape_str());
    }
    rep = ta.numel() / tb.numel();
  }
  Tensor out(ta.shape());
  const std::int64_t nb = tb.numel();
  const float* pa = ta.data();
  const float* pb = tb.data();
  float* po = out.data();
  for (std::int64_t r = 0; r < rep; ++r) {
    for (std::int64_t i = 0; i < nb; ++i) po[r * nb + i] = pa[r * nb + i] + pb[i];
  }
  const int id = push(std::move(out), {a.id, b.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b, rep] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    if (nodes_[static_cast<std::size_t>(a.id)].requires_grad) accum(a.id, g);
    if (nodes_[static_cast<std::size_t>(b.id)].requires_grad) {
      Tensor& gb = grad_buf(b.id);
      const std::int64_t nb2 = gb.numel();
      const float* pg = g.data();
      float* pgb = gb.data();
      for (std::int64_t r = 0; r < rep; ++r) {
        for (std::int64_t i = 0; i < nb2; ++i) pgb[i] += pg[r * nb2 + i];
      }
    }
  };
  return Var{id};
}

Var Graph::scalar_mul(Var x, float c) {
  check_var(x, "scalar_mul");
  const Tensor& tx = value(x);
  Tensor out(tx.shape());
  const float* px = tx.data();
  float* po = out.data();
  const std::int64_t n = tx.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] * c;
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, c] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    Tensor& gx = grad_buf(x.id);
    const float* pg = g.data();
    float* pgx = gx.data();
    const std::int64_t n2 = gx.numel();
    for (std::int64_t i = 0; i < n2; ++i) pgx[i] += pg[i] * c;
  };
  return Var{id};
}

Var Graph::relu(Var x) {
  check_var(x, "relu");
  const Tensor& tx = value(x);
  Tensor out(tx.shape());
  const std::int64_t n = tx.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = tx.data()[i] > 0.0f ? tx.data()[i] : 0.0f;
  const int id = push(std::move(out), {x.id});
  // Subgradient 0 at the kink.
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    const Tensor& tx2 = value(x);
    Tensor& gx = grad_buf(x.id);
    const std::int64_t n2 = gx.numel();
    for (std::int64_t i = 0; i < n2; ++i) {
      if (tx2.data()[i] > 0.0f) gx.data()[i] += g.data()[i];
    }
  };
  return Var{id};
}

Var Graph::silu(Var x) {
  check_var(x, "silu");
  const Tensor& tx = value(x);
  Tensor out(tx.shape());
  const std::int64_t n = tx.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const float v = tx.data()[i];
    const float s = 1.0f / (1.0f + std::exp(-v));
    out.data()[i] = v * s;
  }
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    const Tensor& tx2 = value(x);
    Tensor& gx = grad_buf(x.id);
    const std::int64_t n2 = gx.numel();
    for (std::int64_t i = 0; i < n2; ++i) {
      const float v = tx2.data()[i];
      const float s = 1.0f / (1.0f + std::exp(-v));
      gx.data()[i] += g.data()[i] * (s + v * s * (1.0f - s));
    }
  };
  return Var{id};
}

Var Graph::sigmoid(Var x) {
  check_var(x, "sigmoid");
  const Tensor& tx = value(x);
  Tensor out(tx.shape());
  const std::int64_t n = tx.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = 1.0f / (1.0f + std::exp(-tx.data()[i]));
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    const Tensor& y = nodes_[static_cast<std::size_t>(id)].out;
    Tensor& gx = grad_buf(x.id);
    const std::int64_t n2 = gx.numel();
    for (std::int64_t i = 0; i < n2; ++i) {
      const float s = y.data()[i];
      gx.data()[i] += g.data()[i] * s * (1.0f - s);
    }
  };
  return Var{id};
}

Var Graph::concat(Var a, Var b, int axis) {
  check_var(a, "concat");
  check_var(b, "concat");
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != tb.rank()) {
    throw std::invalid_argument("concat: rank mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  const int ax = resolve_axis(axis, ta.rank(), "concat");
  std::vector<int> shape = ta.shape();
  for (int i = 0; i < ta.rank(); ++i) {
    if (i != ax && ta.shape()[static_cast<std::size_t>(i)] != tb.shape()[static_cast<std::size_t>(i)]) {
      throw std::invalid_argument("concat: incompatible shapes " + ta.shape_str() + " vs " +
                                  tb.shape_str());
    }
  }
  shape[static_cast<std::size_t>(ax)] += tb.shape()[static_cast<std::size_t>(ax)];

  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= ta.shape()[static_cast<std::size_t>(i)];
  for (int i = ax + 1; i < ta.rank(); ++i) inner *= ta.shape()[static_cast<std::size_t>(i)];
  const std::int64_t na = ta.shape()[static_cast<std::size_t>(ax)] * inner;
  const std::int64_t nb = tb.shape()[static_cast<std::size_t>(ax)] * inner;

  Tensor out(shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * (na + nb), ta.data() + o * na, sizeof(float) * static_cast<std::size_t>(na));
    std::memcpy(out.data() + o * (na + nb) + na, tb.data() + o * nb,
                sizeof(float) * static_cast<std::size_t>(nb));
  }
  const int id = push(std::move(out), {a.id, b.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, a, b, outer, na, nb] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    if (nodes_[static_cast<std::size_t>(a.id)].requires_grad) {
      Tensor& ga = grad_buf(a.id);
      for (std::int64_t o = 0; o < outer; ++o) {
        const float* src = g.data() + o * (na + nb);
        float* dst = ga.data() + o * na;
        for (std::int64_t i = 0; i < na; ++i) dst[i] += src[i];
      }
    }
    if (nodes_[static_cast<std::size_t>(b.id)].requires_grad) {
      Tensor& gb = grad_buf(b.id);
      for (std::int64_t o = 0; o < outer; ++o) {
        const float* src = g.data() + o * (na + nb) + na;
        float* dst = gb.data() + o * nb;
        for (std::int64_t i = 0; i < nb; ++i) dst[i] += src[i];
      }
    }
  };
  return Var{id};
}

Var Graph::reshape(Var x, std::vector<int> shape) {
  check_var(x, "reshape");
  const Tensor& tx = value(x);
  if (shape_numel(shape) != tx.numel()) {
    throw std::invalid_argument("reshape: cannot view " + tx.shape_str() + " as " +
                                Tensor::shape_str(shape));
  }
  Tensor out(shape, tx.vec());
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    Tensor& gx = grad_buf(x.id);
    const std::int64_t n = gx.numel();
    for (std::int64_t i = 0; i < n; ++i) gx.data()[i] += g.data()[i];
  };
  return Var{id};
}

namespace {

// Applies an axis permutation to src, writing into dst (dst shape already permuted).
void permute_copy(const Tensor& src, const std::vector<int>& perm, Tensor& dst, bool add) {
  const int r = src.rank();
  std::vector<std::int64_t> src_strides(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    src_strides[static_cast<std::size_t>(i)] =
        src_strides[static_cast<std::size_t>(i + 1)] * src.shape()[static_cast<std::size_t>(i + 1)];
  }
  std::vector<std::int64_t> dst_stride_of_src_axis(static_cast<std::size_t>(r), 0);
  {
    std::vector<std::int64_t> dst_strides(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i) {
      dst_strides[static_cast<std::size_t>(i)] =
          dst_strides[static_cast<std::size_t>(i + 1)] * dst.shape()[static_cast<std::size_t>(i + 1)];
    }
    for (int i = 0; i < r; ++i) {
      dst_stride_of_src_axis[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
          dst_strides[static_cast<std::size_t>(i)];
    }
  }
  const std::int64_t n = src.numel();
  const float* ps = src.data();
  float* pd = dst.data();
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  for (std::int64_t flat = 0; flat < n; ++flat) {
    std::int64_t doff = 0;
    for (int i = 0; i < r; ++i) doff += idx[static_cast<std::size_t>(i)] * dst_stride_of_src_axis[static_cast<std::size_t>(i)];
    if (add) {
      pd[doff] += ps[flat];
    } else {
      pd[doff] = ps[flat];
    }
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < src.shape()[static_cast<std::size_t>(i)]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
}

}  // namespace

Var Graph::transpose(Var x, std::vector<int> perm) {
  check_var(x, "transpose");
  const Tensor& tx = value(x);
  const int r = tx.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw std::invalid_argument("transpose: perm size mismatch for " + tx.shape_str());
  }
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  std::vector<int> shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int p = perm[static_cast<std::size_t>(i)];
    if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]) {
      throw std::invalid_argument("transpose: invalid permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
    shape[static_cast<std::size_t>(i)] = tx.shape()[static_cast<std::size_t>(p)];
  }
  Tensor out(shape);
  permute_copy(tx, perm, out, /*add=*/false);
  std::vector<int> inv(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, inv] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    Tensor& gx = grad_buf(x.id);
    // Gradient flows through the inverse permutation.
    permute_copy(g, inv, gx, /*add=*/true);
  };
  return Var{id};
}

Var Graph::slice_last(Var x, int from, int to) {
  check_var(x, "slice_last");
  const Tensor& tx = value(x);
  const int c = tx.dim(-1);
  if (from < 0 || to > c || from >= to) {
    throw std::invalid_argument("slice_last: bad range [" + std::to_string(from) + "," +
                                std::to_string(to) + ") for " + tx.shape_str());
  }
  std::vector<int> shape = tx.shape();
  shape.back() = to - from;
  const std::int64_t rows = tx.numel() / c;
  const int width = to - from;
  Tensor out(shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    std::memcpy(out.data() + r * width, tx.data() + r * c + from,
                sizeof(float) * static_cast<std::size_t>(width));
  }
  const int id = push(std::move(out), {x.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, rows, width, from, c] {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    Tensor& gx = grad_buf(x.id);
    for (std::int64_t r = 0; r < rows; ++r) {
      const float* src = g.data() + r * width;
      float* dst = gx.data() + r * c + from;
      for (int i = 0; i < width; ++i) dst[i] += src[i];
    }
  };
  return Var{id};
}

Var Graph::huber_mean(Var pred, Var target) {
  check_var(pred, "huber_mean");
  check_var(target, "huber_mean");
  const Tensor& tp = value(pred);
  const Tensor& tt = value(target);
  if (!tp.same_shape(tt)) {
    throw std::invalid_argument("huber_mean: shape mismatch " + tp.shape_str() + " vs " +
                                tt.shape_str());
  }
  const std::int64_t n = tp.numel();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(tt.data()[i]) - static_cast<double>(tp.data()[i]);
    const double ar = std::fabs(r);
    acc += ar <= 1.0 ? 0.5 * r * r : ar - 0.5;
  }
  Tensor out({1}, {static_cast<float>(acc / static_cast<double>(n))});
  const int id = push(std::move(out), {pred.id, target.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, pred, target, n] {
    const float up = nodes_[static_cast<std::size_t>(id)].grad.data()[0];
    const Tensor& tp2 = value(pred);
    const Tensor& tt2 = value(target);
    const float inv_n = 1.0f / static_cast<float>(n);
    if (nodes_[static_cast<std::size_t>(pred.id)].requires_grad) {
      Tensor& gp = grad_buf(pred.id);
      for (std::int64_t i = 0; i < n; ++i) {
        const float r = tt2.data()[i] - tp2.data()[i];
        const float d = std::fabs(r) <= 1.0f ? r : (r > 0.0f ? 1.0f : -1.0f);
        gp.data()[i] += up * (-d) * inv_n;
      }
    }
    if (nodes_[static_cast<std::size_t>(target.id)].requires_grad) {
      Tensor& gt = grad_buf(target.id);
      for (std::int64_t i = 0; i < n; ++i) {
        const float r = tt2.data()[i] - tp2.data()[i];
        const float d = std::fabs(r) <= 1.0f ? r : (r > 0.0f ? 1.0f : -1.0f);
        gt.data()[i] += up * d * inv_n;
      }
    }
  };
  return Var{id};
}

Var Graph::weighted_sum(Var x, Var w) {
  check_var(x, "weighted_sum");
  check_var(w, "weighted_sum");
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  if (!tx.same_shape(tw)) {
    throw std::invalid_argument("weighted_sum: shape mismatch " + tx.shape_str() + " vs " +
                                tw.shape_str());
  }
  const std::int64_t n = tx.numel();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    acc += static_cast<double>(tx.data()[i]) * static_cast<double>(tw.data()[i]);
  }
  Tensor out({1}, {static_cast<float>(acc)});
  const int id = push(std::move(out), {x.id, w.id});
  nodes_[static_cast<std::size_t>(id)].back = [this, id, x, w, n] {
    const float up = nodes_[static_cast<std::size_t>(id)].grad.data()[0];
    if (nodes_[static_cast<std::size_t>(x.id)].requires_grad) {
      Tensor& gx = grad_buf(x.id);
      const Tensor& tw2 = value(w);
      for (std::int64_t i = 0; i < n; ++i) gx.data()[i] += up * tw2.data()[i];
    }
    if (nodes_[static_cast<std::size_t>(w.id)].requires_grad) {
      Tensor& gw = grad_buf(w.id);
      const Tensor& tx2 = value(x);
      for (std::int64_t i = 0; i < n; ++i) gw.data()[i] += up * tx2.data()[i];
    }
  };
  return Var{id};
}

}  // namespace celldet
