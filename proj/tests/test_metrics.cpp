#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "celldet/common/rng.hpp"
#include "celldet/metrics/metrics.hpp"

using namespace celldet;

namespace {

double huber_scalar(double r) {
  const double ar = std::fabs(r);
  return ar <= 1.0 ? 0.5 * r * r : ar - 0.5;
}

// Independent confusion-count oracle for two-class IoU.
double mean_iou_brute(const BinaryMask& pred, const BinaryMask& gt) {
  double sum = 0.0;
  for (int cls = 0; cls < 2; ++cls) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
      const bool p = (pred.v[i] != 0) == (cls == 1);
      const bool g = (gt.v[i] != 0) == (cls == 1);
      if (p && g) ++tp;
      if (p && !g) ++fp;
      if (!p && g) ++fn;
    }
    sum += (tp + fp + fn) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
  }
  return sum / 2.0;
}

}  // namespace

TEST_CASE("huber: zero residual, linear branch, quadratic branch") {
  Tensor y({1}), yh({1});
  y.data()[0] = 0.7f;
  yh.data()[0] = 0.7f;
  CHECK(huber(y, yh) == doctest::Approx(0.0));

  y.data()[0] = 2.0f;
  yh.data()[0] = 0.0f;
  CHECK(huber(y, yh) == doctest::Approx(1.5));

  y.data()[0] = 0.5f;
  yh.data()[0] = 0.0f;
  CHECK(huber(y, yh) == doctest::Approx(0.125));

  Tensor bad({2});
  CHECK_THROWS_AS(huber(y, bad), std::invalid_argument);
}

TEST_CASE("huber derivative is continuous at the transition point") {
  const double h = 1e-5;
  const double left = (huber_scalar(1.0) - huber_scalar(1.0 - h)) / h;
  const double right = (huber_scalar(1.0 + h) - huber_scalar(1.0)) / h;
  CHECK(std::fabs(left - right) < 1e-4);
  const double nleft = (huber_scalar(-1.0 + h) - huber_scalar(-1.0)) / h;
  const double nright = (huber_scalar(-1.0) - huber_scalar(-1.0 - h)) / h;
  CHECK(std::fabs(nleft - nright) < 1e-4);
}

TEST_CASE("total_loss: weights, perfect prediction, height-term scaling") {
  LossTerms unit{1.0, 1.0, 1.0};
  CHECK(unit.total() == doctest::Approx(2.0));

  LabelMaps targets;
  targets.heatmap = Tensor::full({8, 8}, 0.5f);
  targets.height_map = Tensor::full({8, 8}, 0.25f);
  targets.width_map = Tensor::full({8, 8}, 0.75f);
  const auto perfect =
      total_loss(targets.heatmap, targets.height_map, targets.width_map, targets);
  CHECK(perfect.total() == doctest::Approx(0.0));

  // Perturbing only the height pair changes total by exactly half the
  // height-term change.
  Tensor pred_h = Tensor::full({8, 8}, 0.05f);
  const auto base = total_loss(targets.heatmap, pred_h, targets.width_map, targets);
  Tensor pred_h2 = Tensor::full({8, 8}, 0.65f);
  const auto moved = total_loss(targets.heatmap, pred_h2, targets.width_map, targets);
  const double delta_height = moved.height - base.height;
  const double delta_total = moved.total() - base.total();
  CHECK(delta_total == doctest::Approx(0.5 * delta_height).epsilon(1e-12));
  CHECK(std::fabs(delta_total - 0.5 * delta_height) < 1e-7);
}

TEST_CASE("mean_iou: identity, worked 4x4 example, empty prediction") {
  BinaryMask a(3, 3), b(3, 3);
  a.at(1, 1) = b.at(1, 1) = 1;
  CHECK(mean_iou(a, b) == doctest::Approx(1.0));

  BinaryMask gt(4, 4), pred(4, 4);
  gt.at(0, 0) = gt.at(0, 1) = gt.at(1, 0) = gt.at(1, 1) = 1;
  pred.at(0, 0) = pred.at(0, 1) = 1;
  pred.at(2, 2) = 1;
  // Foreground IoU 2/5, background IoU 11/14.
  CHECK(mean_iou(pred, gt) == doctest::Approx((2.0 / 5.0 + 11.0 / 14.0) / 2.0));
  CHECK(mean_iou(pred, gt) == doctest::Approx(0.5929).epsilon(1e-3));

  BinaryMask none(4, 4);
  const double v = mean_iou(none, gt);
  // Foreground IoU is 0 when the prediction is all background.
  CHECK(v == doctest::Approx(0.5 * (0.0 + 12.0 / 16.0)));
}

TEST_CASE("mean_iou matches brute force on all 3x3 mask pairs and is symmetric") {
  for (int pa = 0; pa < 512; ++pa) {
    for (int pb = 0; pb < 512; pb += 7) {  // stride keeps runtime low; full sweep in acceptance
      BinaryMask a(3, 3), b(3, 3);
      for (int i = 0; i < 9; ++i) {
        a.v[static_cast<std::size_t>(i)] = (pa >> i) & 1;
        b.v[static_cast<std::size_t>(i)] = (pb >> i) & 1;
      }
      const double got = mean_iou(a, b);
      CHECK(got == doctest::Approx(mean_iou_brute(a, b)).epsilon(1e-12));
      CHECK(got == doctest::Approx(mean_iou(b, a)).epsilon(1e-12));
      CHECK(got >= 0.0);
      CHECK(got <= 1.0);
    }
  }
}

TEST_CASE("ssim: self-similarity, constant maps, symmetry, upper bound") {
  Rng rng(5);
  Tensor x({16, 16});
  for (std::int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform();
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));

  Tensor ones = Tensor::full({8, 8}, 1.0f);
  Tensor zeros({8, 8});
  const double expected = (1e-4 * 9e-4) / ((1.0 + 1e-4) * 9e-4);
  CHECK(ssim(ones, zeros, 1.0) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(ssim(ones, zeros, 1.0) == doctest::Approx(9.999e-5).epsilon(1e-3));

  Tensor y({16, 16});
  for (std::int64_t i = 0; i < y.numel(); ++i) y.data()[i] = rng.uniform();
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  CHECK(ssim(x, y) < 1.0);
  CHECK(ssim(x, y) >= -1.0);

  CHECK_THROWS_AS(ssim(x, Tensor({4, 4})), std::invalid_argument);
  CHECK_THROWS_AS(ssim(x, y, 0.0), std::invalid_argument);
}

TEST_CASE("threshold_heatmap: boundary rule and monotonicity") {
  Tensor zeros({4, 4});
  const auto none = threshold_heatmap(zeros, 0.5f);
  for (auto v : none.v) CHECK(v == 0);

  Tensor exact = Tensor::full({2, 2}, 0.5f);
  const auto at = threshold_heatmap(exact, 0.5f);
  for (auto v : at.v) CHECK(v == 1);  // >= convention

  Rng rng(9);
  Tensor rand({12, 12});
  for (std::int64_t i = 0; i < rand.numel(); ++i) rand.data()[i] = rng.uniform();
  const auto hi = threshold_heatmap(rand, 0.7f);
  const auto lo = threshold_heatmap(rand, 0.3f);
  for (std::size_t i = 0; i < hi.v.size(); ++i) {
    if (hi.v[i]) CHECK(lo.v[i]);
  }
}
