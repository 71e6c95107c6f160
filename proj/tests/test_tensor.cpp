#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "celldet/common/rng.hpp"
#include "celldet/tensor/flops.hpp"
#include "celldet/tensor/gradcheck.hpp"
#include "celldet/tensor/graph.hpp"

using namespace celldet;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Independent six-loop convolution used as the oracle for conv2d.
Tensor conv2d_reference(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        bool same_padding) {
  const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
  const int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  int oh, ow, pad_top, pad_left;
  if (same_padding) {
    oh = (h + stride - 1) / stride;
    ow = (wd + stride - 1) / stride;
    pad_top = std::max((oh - 1) * stride + kh - h, 0) / 2;
    pad_left = std::max((ow - 1) * stride + kw - wd, 0) / 2;
  } else {
    oh = (h - kh) / stride + 1;
    ow = (wd - kw) / stride + 1;
    pad_top = pad_left = 0;
  }
  Tensor out({n, oh, ow, cout});
  for (int ni = 0; ni < n; ++ni)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int co = 0; co < cout; ++co) {
          float acc = b.data()[co];
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx)
              for (int ci = 0; ci < cin; ++ci) {
                const int y = oy * stride - pad_top + ky;
                const int xx = ox * stride - pad_left + kx;
                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                acc += x.at({ni, y, xx, ci}) * w.at({ky, kx, ci, co});
              }
          out.at({ni, oy, ox, co}) = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d box sum and identity") {
  Graph g;
  Var x = g.constant(Tensor::full({1, 4, 4, 1}, 1.0f));
  Var w = g.constant(Tensor::full({3, 3, 1, 1}, 1.0f));
  Var b = g.constant(Tensor({1}));
  Var y = g.conv2d(x, w, b, 1, Padding::kSame);
  CHECK(g.value(y).at({0, 1, 1, 0}) == doctest::Approx(9.0f));
  CHECK(g.value(y).at({0, 0, 0, 0}) == doctest::Approx(4.0f));

  // 1x1 identity kernel reproduces the input.
  Rng rng(7);
  Tensor img = random_tensor(rng, {1, 5, 6, 1});
  Var xi = g.constant(img);
  Var wi = g.constant(Tensor({1, 1, 1, 1}, {1.0f}));
  Var yi = g.conv2d(xi, wi, b, 1, Padding::kSame);
  for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(g.value(yi).data()[i] == img.data()[i]);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 4; ++trial) {
    Tensor x = random_tensor(rng, {1, 8, 8, 3});
    Tensor w = random_tensor(rng, {3, 3, 3, 2});
    Tensor b = random_tensor(rng, {2});
    const int stride = trial % 2 + 1;
    const bool same = trial < 2;
    Graph g;
    Var y = g.conv2d(g.constant(x), g.constant(w), g.constant(b), stride,
                     same ? Padding::kSame : Padding::kValid);
    Tensor ref = conv2d_reference(x, w, b, stride, same);
    REQUIRE(g.value(y).same_shape(ref));
    for (std::int64_t i = 0; i < ref.numel(); ++i) {
      CHECK(g.value(y).data()[i] == doctest::Approx(ref.data()[i]).epsilon(0).scale(0.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("conv2d rejects channel mismatch with both shapes named") {
  Graph g;
  Var x = g.constant(Tensor({1, 4, 4, 3}));
  Var w = g.constant(Tensor({3, 3, 2, 4}));
  Var b = g.constant(Tensor({4}));
  CHECK_THROWS_WITH_AS(g.conv2d(x, w, b, 1, Padding::kSame),
                       doctest::Contains("[1x4x4x3]"), std::invalid_argument);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(3);
  Tensor a = random_tensor(rng, {2, 3});
  Tensor b = random_tensor(rng, {3, 2});
  Graph g;
  Var y = g.matmul(g.constant(a), g.constant(b));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      float acc = 0.0f;
      for (int k = 0; k < 3; ++k) acc += a.at({i, k}) * b.at({k, j});
      CHECK(g.value(y).at({i, j}) == doctest::Approx(acc).epsilon(1e-6));
    }
}

TEST_CASE("softmax of zeros is uniform and slices sum to one") {
  Graph g;
  Var y = g.softmax(g.constant(Tensor({1, 4})), -1);
  for (int j = 0; j < 4; ++j) CHECK(g.value(y).at({0, j}) == doctest::Approx(0.25f));

  Rng rng(5);
  Tensor x = random_tensor(rng, {3, 4, 7}, -3.0f, 3.0f);
  Var ys = g.softmax(g.constant(x), -1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double sum = 0.0;
      for (int k = 0; k < 7; ++k) {
        const float v = g.value(ys).at({i, j, k});
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("layer_norm normalizes [1,2,3] to zero mean unit variance") {
  Graph g;
  Var x = g.constant(Tensor({1, 3}, {1.0f, 2.0f, 3.0f}));
  Var gain = g.constant(Tensor::full({3}, 1.0f));
  Var bias = g.constant(Tensor({3}));
  Var y = g.layer_norm(x, gain, bias, -1);
  double mean = 0.0, var = 0.0;
  for (int j = 0; j < 3; ++j) mean += g.value(y).at({0, j});
  mean /= 3.0;
  for (int j = 0; j < 3; ++j) {
    const double d = g.value(y).at({0, j}) - mean;
    var += d * d;
  }
  var /= 3.0;
  CHECK(std::fabs(mean) < 1e-6);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps=1e-5 shrinks variance slightly
  CHECK_THROWS_AS(g.layer_norm(x, gain, bias, 5), std::invalid_argument);
}

TEST_CASE("batch_norm updates running statistics with momentum 0.99") {
  Graph g;
  Rng rng(9);
  Tensor x = random_tensor(rng, {2, 3, 3, 2}, 0.0f, 4.0f);
  Tensor rm({2});
  Tensor rv = Tensor::full({2}, 1.0f);
  Var gamma = g.constant(Tensor::full({2}, 1.0f));
  Var beta = g.constant(Tensor({2}));
  g.batch_norm(g.constant(x), gamma, beta, rm, rv, /*training=*/true);
  // Channel statistics computed over N*H*W.
  for (int c = 0; c < 2; ++c) {
    double mu = 0.0;
    for (int i = 0; i < 18; ++i) mu += x.data()[i * 2 + c];
    mu /= 18.0;
    double var = 0.0;
    for (int i = 0; i < 18; ++i) {
      const double d = x.data()[i * 2 + c] - mu;
      var += d * d;
    }
    var /= 18.0;
    CHECK(rm.data()[c] == doctest::Approx(0.01 * mu).epsilon(1e-4));
    CHECK(rv.data()[c] == doctest::Approx(0.99 + 0.01 * var).epsilon(1e-4));
  }
}

TEST_CASE("bilinear_upsample: constants, documented 2x2 case, shape contract") {
  Graph g;
  Var c = g.constant(Tensor::full({1, 3, 3, 2}, 0.7f));
  Var up = g.bilinear_upsample(c, 2);
  for (std::int64_t i = 0; i < g.value(up).numel(); ++i) {
    CHECK(g.value(up).data()[i] == doctest::Approx(0.7f));
  }

  // Rows of [[0,1],[0,1]] interpolate to [0, 0.25, 0.75, 1] under
  // half-pixel centers: src = (dst + 0.5)/2 - 0.5 clamped to the frame.
  Var x = g.constant(Tensor({1, 2, 2, 1}, {0.0f, 1.0f, 0.0f, 1.0f}));
  Var y = g.bilinear_upsample(x, 2);
  const float expect[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (int r = 0; r < 4; ++r)
    for (int cidx = 0; cidx < 4; ++cidx) {
      CHECK(g.value(y).at({0, r, cidx, 0}) == doctest::Approx(expect[cidx]).epsilon(1e-6));
    }

  Var big = g.constant(Tensor({1, 48, 48, 3}));
  CHECK(g.value(g.bilinear_upsample(big, 2)).shape() == std::vector<int>{1, 96, 96, 3});
  CHECK_THROWS_AS(g.bilinear_upsample(x, 1), std::invalid_argument);
}

TEST_CASE("unfold groups pixels by intra-patch offset; fold inverts exactly") {
  Graph g;
  std::vector<float> vals(16);
  for (int i = 0; i < 16; ++i) vals[static_cast<std::size_t>(i)] = static_cast<float>(i);
  Var x = g.constant(Tensor({1, 4, 4, 1}, vals));
  Var seq = g.unfold(x, 2);
  REQUIRE(g.value(seq).shape() == std::vector<int>{4, 4, 1});
  // Offset (0,0) group holds {0, 2, 8, 10}.
  CHECK(g.value(seq).at({0, 0, 0}) == 0.0f);
  CHECK(g.value(seq).at({0, 1, 0}) == 2.0f);
  CHECK(g.value(seq).at({0, 2, 0}) == 8.0f);
  CHECK(g.value(seq).at({0, 3, 0}) == 10.0f);

  CHECK_THROWS_AS(g.unfold(x, 3), std::invalid_argument);

  // fold(unfold(x)) is the exact identity over random shape/patch pairs.
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int patch = rng.uniform_int(1, 4);
    const int h = patch * rng.uniform_int(1, 5);
    const int w = patch * rng.uniform_int(1, 5);
    const int c = rng.uniform_int(1, 4);
    Tensor t = random_tensor(rng, {1, h, w, c});
    Graph g2;
    Var v = g2.constant(t);
    Var folded = g2.fold(g2.unfold(v, patch), h, w, patch);
    REQUIRE(g2.value(folded).same_shape(t));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      CHECK(g2.value(folded).data()[i] == t.data()[i]);  // bit-exact
    }
  }
}

TEST_CASE("backward of a linear readout returns the constant factor") {
  Graph g;
  Rng rng(13);
  Tensor xval = random_tensor(rng, {3, 4});
  Tensor wval = random_tensor(rng, {3, 4});
  Var w = g.parameter("w", wval);
  Var loss = g.weighted_sum(w, g.constant(xval));
  g.backward(loss);
  Tensor gw = g.grad("w");
  for (std::int64_t i = 0; i < xval.numel(); ++i) CHECK(gw.data()[i] == xval.data()[i]);
}

TEST_CASE("two backward passes produce bit-identical gradients") {
  Graph g;
  Rng rng(17);
  Var x = g.parameter("x", random_tensor(rng, {1, 6, 6, 2}));
  Var w = g.parameter("w", random_tensor(rng, {3, 3, 2, 3}));
  Var b = g.parameter("b", random_tensor(rng, {3}));
  Var y = g.silu(g.conv2d(x, w, b, 1, Padding::kSame));
  Tensor weights = random_tensor(rng, {1, 6, 6, 3});
  Var loss = g.weighted_sum(y, g.constant(weights));
  g.backward(loss);
  Tensor g1 = g.grad("w");
  g.backward(loss);
  Tensor g2 = g.grad("w");
  for (std::int64_t i = 0; i < g1.numel(); ++i) CHECK(g1.data()[i] == g2.data()[i]);
}

TEST_CASE("unreachable parameters get zero gradients") {
  Graph g;
  Var used = g.parameter("used", Tensor::full({2}, 1.0f));
  Var unused = g.parameter("unused", Tensor::full({3}, 1.0f));
  Var loss = g.weighted_sum(used, g.constant(Tensor::full({2}, 2.0f)));
  g.backward(loss);
  Tensor gu = g.grad(unused);
  for (std::int64_t i = 0; i < gu.numel(); ++i) CHECK(gu.data()[i] == 0.0f);
  CHECK_THROWS_AS(g.backward(g.parameter("vec", Tensor({4}))), std::invalid_argument);
}

TEST_CASE("gradcheck: every op matches central finite differences") {
  const auto reports = gradcheck_all_ops(123, 5);
  for (const auto& r : reports) {
    INFO(r.name, " max_rel=", r.max_rel_err);
    CHECK(r.pass);
    CHECK(r.max_rel_err < 1e-3);
  }
}

TEST_CASE("complexity models evaluate the dominant terms") {
  ComplexityParams p;
  p.n = 16;
  p.d = 8;
  p.h = 2;
  p.k = 9;
  p.f = 4;
  CHECK(mhsa_flops(p) == 4096);
  CHECK(conv_flops(p) == 4608);

  ComplexityParams dbl = p;
  dbl.n = 2 * p.n;
  CHECK(mhsa_flops(dbl) == 4 * mhsa_flops(p));
  CHECK(conv_flops(dbl) == 2 * conv_flops(p));

  ComplexityParams bad;
  bad.n = 0;
  CHECK_THROWS_AS(mhsa_flops(bad), std::invalid_argument);
}
