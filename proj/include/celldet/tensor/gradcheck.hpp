#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "celldet/tensor/graph.hpp"

namespace celldet {

// Builds a scalar loss from named parameter leaves "x0", "x1", ... bound to
// the given input tensors. Must be pure: repeated calls with equal inputs
// produce equal losses.
using LossBuilder = std::function<Var(Graph&, const std::vector<Tensor>&)>;

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  std::int64_t checked = 0;
  bool pass = false;
};

// Central-difference check of every input element: rel = |a - n| /
// max(|a|, |n|, floor). The floor keeps float32 forward noise from
// dominating the ratio where the true gradient is near zero.
double gradcheck_max_rel(const LossBuilder& build, const std::vector<Tensor>& inputs, double eps,
                         double floor);

// Runs the per-op sweep: every differentiable op, `seeds` seeds and three
// shapes each, eps = 1e-3, tolerance 1e-3 with unit floor.
std::vector<GradCheckReport> gradcheck_all_ops(std::uint64_t seed, int seeds = 5);

}  // namespace celldet
