#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "celldet/tensor/tensor.hpp"

namespace celldet {

// Handle into a Graph's node list.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Padding { kSame, kValid };

// Tape for reverse-mode automatic differentiation. Ops append nodes in
// topological order; backward() walks the tape in reverse and accumulates
// gradients into every reachable node. Leaves registered via parameter()
// are queryable by name afterwards.
//
// A Graph is confined to one thread; the ops themselves may parallelize
// internally with a fixed per-element reduction order, so results do not
// depend on the thread count.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----
  Var constant(Tensor value);
  // Registers (or re-binds to) a named trainable leaf. Repeated calls with
  // the same name return the same node so gradients accumulate across uses.
  Var parameter(const std::string& name, const Tensor& value);

  // ---- elementwise / shape ----
  Var add(Var a, Var b);  // equal shapes, or b broadcast over leading dims
  Var scalar_mul(Var x, float c);
  Var relu(Var x);
  Var silu(Var x);
  Var sigmoid(Var x);
  Var concat(Var a, Var b, int axis);
  Var reshape(Var x, std::vector<int> shape);
  Var transpose(Var x, std::vector<int> perm);
  Var slice_last(Var x, int from, int to);  // half-open channel range

  // ---- linear algebra ----
  // a: [..., m, k]; b: [k, n] (2-D weight, broadcast over batch) or
  // [..., k, n] with identical leading dims. transpose_b swaps b's two
  // trailing axes before the product.
  Var matmul(Var a, Var b, bool transpose_b = false);
  Var softmax(Var x, int axis);
  Var layer_norm(Var x, Var gain, Var bias, int axis, float eps = 1e-5f);
  // NHWC batch norm over the trailing channel axis. Running statistics are
  // updated in-place when training (momentum 0.99 by default).
  Var batch_norm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
                 bool training, float momentum = 0.99f, float eps = 1e-5f);

  // ---- convolution / resampling ----
  // x: [N,H,W,Cin]; w: [Kh,Kw,Cin,Cout]; b: [Cout].
  Var conv2d(Var x, Var w, Var b, int stride, Padding padding);
  // Half-pixel-centers bilinear interpolation; factor >= 2.
  Var bilinear_upsample(Var x, int factor);
  // x: [1,H,W,C] -> [patch^2, (H*W)/patch^2, C]; tokens grouped by
  // intra-patch pixel offset, patches scanned row-major.
  Var unfold(Var x, int patch);
  Var fold(Var seq, int height, int width, int patch);

  // ---- reductions / losses ----
  // Mean-reduced Huber with transition point 1.0 on |target - pred|.
  Var huber_mean(Var pred, Var target);
  // Scalar dot product sum(x * w); w typically a constant.
  Var weighted_sum(Var x, Var w);

  // ---- engine ----
  // loss must be scalar; resets all gradients, then seeds d(loss)=1 and
  // walks the tape in reverse. Repeatable: a second call reproduces
  // identical gradients bit for bit.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() w.r.t. v; zeros if unreachable.
  Tensor grad(Var v) const;
  Tensor grad(const std::string& param_name) const;
  Var param_var(const std::string& name) const;
  const std::vector<std::string>& param_names() const { return param_order_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor out;
    Tensor grad;
    bool grad_alloc = false;
    bool requires_grad = false;
    std::function<void()> back;
  };

  int push(Tensor out, const std::vector<int>& inputs);
  Tensor& grad_buf(int id);
  void accum(int id, const Tensor& delta);
  const Node& node(Var v) const;
  void check_var(Var v, const char* op) const;

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;
  std::vector<std::string> param_order_;
};

}  // namespace celldet
