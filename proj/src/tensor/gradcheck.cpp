#include "celldet/tensor/gradcheck.hpp"

#include <cmath>

#include "celldet/common/rng.hpp"

namespace celldet {

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

double eval_loss(const LossBuilder& build, const std::vector<Tensor>& inputs) {
  Graph g;
  const Var loss = build(g, inputs);
  return static_cast<double>(g.value(loss).data()[0]);
}

}  // namespace

double gradcheck_max_rel(const LossBuilder& build, const std::vector<Tensor>& inputs, double eps,
                         double floor) {
  Graph g;
  const Var loss = build(g, inputs);
  g.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    analytic.push_back(g.grad("x" + std::to_string(i)));
  }

  double max_rel = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::int64_t e = 0; e < inputs[t].numel(); ++e) {
      const double orig = static_cast<double>(inputs[t].data()[e]);
      const float hi = static_cast<float>(orig + eps);
      const float lo = static_cast<float>(orig - eps);
      probe[t].data()[e] = hi;
      const double lp = eval_loss(build, probe);
      probe[t].data()[e] = lo;
      const double lm = eval_loss(build, probe);
      probe[t].data()[e] = static_cast<float>(orig);
      // Effective step after float32 rounding of the perturbed value.
      const double eff = (static_cast<double>(hi) - static_cast<double>(lo)) / 2.0;
      const double numeric = (lp - lm) / (2.0 * eff);
      const double a = static_cast<double>(analytic[t].data()[e]);
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

namespace {

struct OpCase {
  std::string name;
  std::function<double(std::uint64_t seed, int variant)> run;  // returns max rel err
};

Var bind_all(Graph& g, const std::vector<Tensor>& inputs, std::vector<Var>& vars) {
  vars.clear();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(g.parameter("x" + std::to_string(i), inputs[i]));
  }
  return vars.empty() ? Var{} : vars[0];
}

// Scalar readout: dot with fixed +-0.5 weights so gradients stay O(1)
// while float32 forward noise stays well below the check tolerance.
Var readout(Graph& g, Var y, std::uint64_t seed) {
  const Tensor& v = g.value(y);
  Rng rng(seed ^ 0xABCDEF12ULL);
  Tensor w(v.shape());
  for (std::int64_t i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform() < 0.5f ? -0.5f : 0.5f;
  return g.weighted_sum(y, g.constant(std::move(w)));
}

double run_case(const LossBuilder& build, const std::vector<Tensor>& inputs) {
  return gradcheck_max_rel(build, inputs, 1e-3, 1.0);
}

}  // namespace

std::vector<GradCheckReport> gradcheck_all_ops(std::uint64_t seed, int seeds) {
  std::vector<OpCase> cases;

  cases.push_back({"conv2d", [](std::uint64_t s, int variant) {
    Rng rng(s);
    const int cin = 1 + variant % 2;
    const int cout = 1 + (variant + 1) % 2;
    const int stride = variant % 2 == 0 ? 1 : 2;
    const Padding pad = variant % 3 == 2 ? Padding::kValid : Padding::kSame;
    // Sub-unit magnitudes keep float32 forward noise well under the
    // finite-difference tolerance while gradients stay O(1).
    std::vector<Tensor> in = {random_tensor(rng, {1, 4 + variant % 2, 4, cin}, -0.5f, 0.5f),
                              random_tensor(rng, {3, 3, cin, cout}, -0.5f, 0.5f),
                              random_tensor(rng, {cout}, -0.5f, 0.5f)};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.conv2d(v[0], v[1], v[2], stride, pad), s);
        },
        in);
  }});

  cases.push_back({"matmul", [](std::uint64_t s, int variant) {
    Rng rng(s);
    std::vector<Tensor> in;
    bool tb = variant % 2 == 1;
    const float m = 0.5f;
    if (variant % 3 == 0) {
      in = {random_tensor(rng, {3, 4}, -m, m),
            tb ? random_tensor(rng, {2, 4}, -m, m) : random_tensor(rng, {4, 2}, -m, m)};
    } else if (variant % 3 == 1) {
      in = {random_tensor(rng, {2, 3, 4}, -m, m),
            tb ? random_tensor(rng, {2, 5, 4}, -m, m) : random_tensor(rng, {2, 4, 5}, -m, m)};
    } else {
      in = {random_tensor(rng, {4, 2, 3}, -m, m),
            tb ? random_tensor(rng, {5, 3}, -m, m) : random_tensor(rng, {3, 5}, -m, m)};
    }
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.matmul(v[0], v[1], tb), s);
        },
        in);
  }});

  cases.push_back({"add", [](std::uint64_t s, int variant) {
    Rng rng(s);
    std::vector<Tensor> in;
    if (variant % 2 == 0) {
      in = {random_tensor(rng, {3, 4, 5}), random_tensor(rng, {3, 4, 5})};
    } else {
      in = {random_tensor(rng, {3, 4, 5}), random_tensor(rng, {5})};  // broadcast bias
    }
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.add(v[0], v[1]), s);
        },
        in);
  }});

  cases.push_back({"scalar_mul", [](std::uint64_t s, int variant) {
    Rng rng(s);
    const float c = 0.5f + 0.25f * static_cast<float>(variant);
    std::vector<Tensor> in = {random_tensor(rng, {4, 6})};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.scalar_mul(v[0], c), s);
        },
        in);
  }});

  cases.push_back({"relu", [](std::uint64_t s, int variant) {
    Rng rng(s);
    // Keep samples away from the kink at zero.
    Tensor t({3, 4 + variant});
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const float m = rng.uniform(0.2f, 1.2f);
      t.data()[i] = rng.uniform() < 0.5f ? -m : m;
    }
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.relu(v[0]), s);
        },
        {t});
  }});

  cases.push_back({"silu", [](std::uint64_t s, int variant) {
    Rng rng(s);
    std::vector<Tensor> in = {random_tensor(rng, {2, 5 + variant}, -2.0f, 2.0f)};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.silu(v[0]), s);
        },
        in);
  }});

  cases.push_back({"sigmoid", [](std::uint64_t s, int variant) {
    Rng rng(s);
    std::vector<Tensor> in = {random_tensor(rng, {3, 3 + variant}, -2.0f, 2.0f)};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.sigmoid(v[0]), s);
        },
        in);
  }});

  cases.push_back({"softmax", [](std::uint64_t s, int variant) {
    Rng rng(s);
    const int axis = variant % 2 == 0 ? -1 : 1;
    std::vector<Tensor> in = {random_tensor(rng, {3, 4, 5}, -2.0f, 2.0f)};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.softmax(v[0], axis), s);
        },
        in);
  }});

  cases.push_back({"layer_norm", [](std::uint64_t s, int variant) {
    Rng rng(s);
    const int axis = variant % 3 == 2 ? 1 : -1;
    std::vector<Tensor> in = {random_tensor(rng, {3, 4, 6}),
                              random_tensor(rng, {axis == -1 ? 6 : 4}, 0.4f, 0.8f),
                              random_tensor(rng, {axis == -1 ? 6 : 4}, -0.3f, 0.3f)};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.layer_norm(v[0], v[1], v[2], axis), s);
        },
        in);
  }});

  cases.push_back({"batch_norm", [](std::uint64_t s, int variant) {
    Rng rng(s);
    const bool training = variant % 2 == 0;
    const int c = 3 + variant % 2;
    std::vector<Tensor> in = {random_tensor(rng, {1, 3, 3, c}),
                              random_tensor(rng, {c}, 0.4f, 0.8f),
                              random_tensor(rng, {c}, -0.3f, 0.3f)};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          // Fresh running stats each call keeps the build pure.
          Tensor rm(std::vector<int>{c});
          Tensor rv = Tensor::full({c}, 1.0f);
          return readout(g, g.batch_norm(v[0], v[1], v[2], rm, rv, training), s);
        },
        in);
  }});

  cases.push_back({"concat", [](std::uint64_t s, int variant) {
    Rng rng(s);
    const int axis = variant % 3;
    std::vector<int> sa = {2, 3, 4};
    std::vector<int> sb = sa;
    sb[static_cast<std::size_t>(axis)] = 2;
    std::vector<Tensor> in = {random_tensor(rng, sa), random_tensor(rng, sb)};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.concat(v[0], v[1], axis), s);
        },
        in);
  }});

  cases.push_back({"bilinear_upsample", [](std::uint64_t s, int variant) {
    Rng rng(s);
    const int factor = 2 + variant % 2;
    std::vector<Tensor> in = {random_tensor(rng, {1, 3 + variant % 2, 4, 2})};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return readout(g, g.bilinear_upsample(v[0], factor), s);
        },
        in);
  }});

  cases.push_back({"unfold_fold", [](std::uint64_t s, int variant) {
    Rng rng(s);
    const int patch = 2 + variant % 2;
    const int hw = patch * (2 + variant % 3);
    std::vector<Tensor> in = {random_tensor(rng, {1, hw, hw, 3})};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          Var seq = g.unfold(v[0], patch);
          // Push a nonlinearity between the pair so fold sees a non-trivial grad.
          return readout(g, g.fold(g.silu(seq), hw, hw, patch), s);
        },
        in);
  }});

  cases.push_back({"transpose_reshape_slice", [](std::uint64_t s, int variant) {
    Rng rng(s);
    std::vector<Tensor> in = {random_tensor(rng, {2, 3, 4, 6})};
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          Var t = g.transpose(v[0], {0, 2, 1, 3});
          Var r = g.reshape(t, {2, 12, 6});
          Var sl = g.slice_last(r, 1, 4 + variant % 3);
          return readout(g, sl, s);
        },
        in);
  }});

  cases.push_back({"huber_mean", [](std::uint64_t s, int variant) {
    Rng rng(s);
    // Residuals kept away from the |r| = 1 transition.
    Tensor pred({4, 5});
    Tensor target({4, 5});
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
      target.data()[i] = rng.uniform(-1.5f, 1.5f);
      float r = rng.uniform(0.1f, 0.8f);
      if (variant % 2 == 1) r = rng.uniform(1.2f, 2.5f);
      pred.data()[i] = target.data()[i] - (rng.uniform() < 0.5f ? -r : r);
    }
    return run_case(
        [=](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return g.huber_mean(v[0], v[1]);
        },
        {pred, target});
  }});

  cases.push_back({"weighted_sum", [](std::uint64_t s, int variant) {
    Rng rng(s);
    std::vector<Tensor> in = {random_tensor(rng, {3, 4 + variant}),
                              random_tensor(rng, {3, 4 + variant})};
    return run_case(
        [](Graph& g, const std::vector<Tensor>& xs) {
          std::vector<Var> v;
          bind_all(g, xs, v);
          return g.weighted_sum(v[0], v[1]);
        },
        in);
  }});

  std::vector<GradCheckReport> reports;
  for (const auto& c : cases) {
    GradCheckReport r;
    r.name = c.name;
    for (int si = 0; si < seeds; ++si) {
      for (int variant = 0; variant < 3; ++variant) {
        const std::uint64_t s = Rng::mix(seed, static_cast<std::uint64_t>(si * 101 + variant));
        const double rel = c.run(s, variant);
        r.max_rel_err = std::max(r.max_rel_err, rel);
        ++r.checked;
      }
    }
    r.pass = r.max_rel_err < 1e-3;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace celldet
