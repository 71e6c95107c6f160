#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "celldet/codec/labels.hpp"
#include "celldet/common/rng.hpp"

using namespace celldet;

namespace {

// Brute-force annotation oracle: collects every pixel per label, then reduces.
std::vector<CellAnnotation> annotations_brute_force(const InstanceMask& mask) {
  std::map<int, std::vector<std::pair<int, int>>> pixels;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(y, x) != 0) pixels[mask.at(y, x)].emplace_back(y, x);
  std::vector<CellAnnotation> out;
  for (const auto& [label, pts] : pixels) {
    CellAnnotation a;
    a.id = label;
    int min_x = pts[0].second, max_x = pts[0].second;
    int min_y = pts[0].first, max_y = pts[0].first;
    double sx = 0.0, sy = 0.0;
    for (auto [y, x] : pts) {
      sx += x;
      sy += y;
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
    a.cx = sx / static_cast<double>(pts.size());
    a.cy = sy / static_cast<double>(pts.size());
    a.w = max_x - min_x + 1;
    a.h = max_y - min_y + 1;
    out.push_back(a);
  }
  return out;
}

}  // namespace

TEST_CASE("annotations: rectangle centroid and extent") {
  InstanceMask mask(10, 12);
  for (int y = 2; y <= 6; ++y)
    for (int x = 4; x <= 6; ++x) mask.at(y, x) = 1;
  const auto anns = annotations_from_instance_mask(mask);
  REQUIRE(anns.size() == 1);
  CHECK(anns[0].cx == doctest::Approx(5.0));
  CHECK(anns[0].cy == doctest::Approx(4.0));
  CHECK(anns[0].w == doctest::Approx(3.0));
  CHECK(anns[0].h == doctest::Approx(5.0));
}

TEST_CASE("annotations: ordering by id, empty mask, brute-force oracle") {
  InstanceMask empty(5, 5);
  CHECK(annotations_from_instance_mask(empty).empty());

  InstanceMask two(8, 8);
  two.at(6, 6) = 7;
  two.at(1, 1) = 3;
  const auto anns = annotations_from_instance_mask(two);
  REQUIRE(anns.size() == 2);
  CHECK(anns[0].id == 3);
  CHECK(anns[1].id == 7);

  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    InstanceMask m(20, 24);
    const int blobs = rng.uniform_int(1, 5);
    for (int b = 0; b < blobs; ++b) {
      const int cy = rng.uniform_int(3, 16);
      const int cx = rng.uniform_int(3, 20);
      const int r = rng.uniform_int(1, 3);
      for (int y = cy - r; y <= cy + r; ++y)
        for (int x = cx - r; x <= cx + r; ++x)
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
            m.at(y, x) = static_cast<std::uint16_t>(b + 1);
    }
    const auto got = annotations_from_instance_mask(m);
    const auto want = annotations_brute_force(m);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].id == want[i].id);
      CHECK(got[i].cx == doctest::Approx(want[i].cx));
      CHECK(got[i].cy == doctest::Approx(want[i].cy));
      CHECK(got[i].w == doctest::Approx(want[i].w));
      CHECK(got[i].h == doctest::Approx(want[i].h));
    }
  }
}

TEST_CASE("rasterize_ellipse: area, degenerate case, containment oracle") {
  for (double r : {5.0, 8.0, 12.0}) {
    const auto m = rasterize_ellipse(40.0, 40.0, r, r, 80, 80);
    std::int64_t count = 0;
    for (auto v : m.v) count += v;
    const double area = 3.14159265358979 * r * r;
    CHECK(std::fabs(static_cast<double>(count) - area) < 0.1 * area);
  }

  const auto single = rasterize_ellipse(10.2, 7.4, 0.5, 0.5, 20, 20);
  std::int64_t count = 0;
  for (auto v : single.v) count += v;
  CHECK(count == 1);
  CHECK(single.at(7, 10) == 1);

  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const double cx = rng.uniform(2.0f, 28.0f);
    const double cy = rng.uniform(2.0f, 22.0f);
    const double a = rng.uniform(0.5f, 6.0f);
    const double b = rng.uniform(0.5f, 6.0f);
    const auto got = rasterize_ellipse(cx, cy, a, b, 24, 30);
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 30; ++x) {
        const double dx = (x - cx) / a;
        const double dy = (y - cy) / b;
        const bool inside = dx * dx + dy * dy <= 1.0;
        CHECK(got.at(y, x) == (inside ? 1 : 0));
      }
  }
  CHECK_THROWS_AS(rasterize_ellipse(5, 5, 0.0, 1.0, 10, 10), std::invalid_argument);
}

TEST_CASE("encode: empty list, direct value rule, bounds") {
  const auto empty = encode({}, 32, 32);
  for (std::int64_t i = 0; i < empty.heatmap.numel(); ++i) {
    CHECK(empty.heatmap.data()[i] == 0.0f);
    CHECK(empty.height_map.data()[i] == 0.0f);
    CHECK(empty.width_map.data()[i] == 0.0f);
  }

  CellAnnotation ann{1, 50.0, 50.0, 20.0, 30.0};
  const auto maps = encode({ann}, 100, 100);
  CHECK(maps.height_map.at({50, 50}) == doctest::Approx(0.30));
  CHECK(maps.width_map.at({50, 50}) == doctest::Approx(0.20));
  // Heatmap argmax at the centroid with peak exactly 1.
  float best = -1.0f;
  int by = -1, bx = -1;
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x)
      if (maps.heatmap.at({y, x}) > best) {
        best = maps.heatmap.at({y, x});
        by = y;
        bx = x;
      }
  CHECK(by == 50);
  CHECK(bx == 50);
  CHECK(best == doctest::Approx(1.0f));
  for (std::int64_t i = 0; i < maps.heatmap.numel(); ++i) {
    CHECK(maps.heatmap.data()[i] >= 0.0f);
    CHECK(maps.heatmap.data()[i] <= 1.0f);
  }

  CHECK_THROWS_AS(encode({CellAnnotation{1, -3.0, 5.0, 4.0, 4.0}}, 32, 32), std::invalid_argument);
}

TEST_CASE("encode is symmetric under mirroring the layout") {
  const int H = 64, W = 80;
  std::vector<CellAnnotation> anns = {{1, 20.5, 17.5, 12.0, 9.0}, {2, 55.25, 40.0, 8.0, 14.0}};
  std::vector<CellAnnotation> mirrored;
  for (auto a : anns) {
    a.cx = (W - 1) - a.cx;
    mirrored.push_back(a);
  }
  const auto m1 = encode(anns, H, W);
  const auto m2 = encode(mirrored, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      CHECK(m1.heatmap.at({y, x}) == m2.heatmap.at({y, (W - 1) - x}));
      CHECK(m1.height_map.at({y, x}) == m2.height_map.at({y, (W - 1) - x}));
      CHECK(m1.width_map.at({y, x}) == m2.width_map.at({y, (W - 1) - x}));
    }
}

TEST_CASE("encode is translation-equivariant for integer shifts") {
  const int H = 96, W = 96;
  std::vector<CellAnnotation> anns = {{1, 30.25, 28.5, 10.0, 12.0}, {2, 60.5, 58.75, 14.0, 9.0}};
  const int dx = 7, dy = -5;
  std::vector<CellAnnotation> shifted;
  for (auto a : anns) {
    a.cx += dx;
    a.cy += dy;
    shifted.push_back(a);
  }
  const auto m1 = encode(anns, H, W);
  const auto m2 = encode(shifted, H, W);
  // Compare on the interior where both supports stay inside the frame.
  for (int y = 20; y < 76; ++y)
    for (int x = 20; x < 76; ++x) {
      if (y + dy < 0 || y + dy >= H || x + dx < 0 || x + dx >= W) continue;
      CHECK(m1.heatmap.at({y, x}) == m2.heatmap.at({y + dy, x + dx}));
    }
}

TEST_CASE("decode: empty map, roundtrip, two cells, threshold monotone") {
  Tensor zeros({32, 32});
  CHECK(decode(zeros, zeros, zeros, 0.5f).empty());

  CellAnnotation ann{1, 50.0, 46.0, 22.0, 16.0};
  const auto maps = encode({ann}, 100, 100);
  const auto dets = decode(maps.heatmap, maps.height_map, maps.width_map, 0.5f);
  REQUIRE(dets.size() == 1);
  CHECK(std::fabs(dets[0].cx - ann.cx) <= 2.0);
  CHECK(std::fabs(dets[0].cy - ann.cy) <= 2.0);
  CHECK(std::fabs(dets[0].w - ann.w) <= 0.1 * ann.w);
  CHECK(std::fabs(dets[0].h - ann.h) <= 0.1 * ann.h);
  CHECK(dets[0].score >= 0.5f);

  std::vector<CellAnnotation> two = {{1, 25.0, 25.0, 14.0, 12.0}, {2, 70.0, 68.0, 12.0, 16.0}};
  const auto maps2 = encode(two, 100, 100);
  CHECK(decode(maps2.heatmap, maps2.height_map, maps2.width_map, 0.5f).size() == 2);

  // On separated-cell heatmaps, raising the threshold never increases the
  // detection count (components only shrink or vanish, never split).
  std::vector<CellAnnotation> layout = {{1, 20.0, 20.0, 16.0, 12.0},
                                        {2, 70.0, 30.0, 10.0, 18.0},
                                        {3, 40.0, 72.0, 20.0, 20.0}};
  const auto maps3 = encode(layout, 100, 100);
  std::size_t last = SIZE_MAX;
  for (float t : {0.05f, 0.2f, 0.4f, 0.6f, 0.8f, 0.95f}) {
    const auto d = decode(maps3.heatmap, maps3.height_map, maps3.width_map, t);
    CHECK(d.size() <= last);
    last = d.size();
  }
}

TEST_CASE("codec roundtrip over 100 seeded layouts") {
  Rng rng(2024);
  for (int layout = 0; layout < 100; ++layout) {
    const int H = 96, W = 96;
    std::vector<CellAnnotation> anns;
    // Rejection-sample separated cells.
    const int want = rng.uniform_int(1, 6);
    int attempts = 0;
    while (static_cast<int>(anns.size()) < want && attempts < 500) {
      ++attempts;
      CellAnnotation a;
      a.id = static_cast<int>(anns.size()) + 1;
      a.w = rng.uniform(8.0f, 22.0f);
      a.h = rng.uniform(8.0f, 22.0f);
      const double margin = std::max(a.w, a.h);
      a.cx = rng.uniform(static_cast<float>(margin), static_cast<float>(W - margin));
      a.cy = rng.uniform(static_cast<float>(margin), static_cast<float>(H - margin));
      bool ok = true;
      for (const auto& other : anns) {
        const double dx = a.cx - other.cx, dy = a.cy - other.cy;
        const double sep = std::sqrt(dx * dx + dy * dy);
        if (sep <= std::max({a.w, a.h, other.w, other.h})) {
          ok = false;
          break;
        }
      }
      if (ok) anns.push_back(a);
    }
    const auto maps = encode(anns, H, W);
    const auto dets = decode(maps.heatmap, maps.height_map, maps.width_map, 0.5f);
    REQUIRE(dets.size() == anns.size());
    // Greedy nearest-centroid matching.
    std::vector<bool> used(dets.size(), false);
    for (const auto& a : anns) {
      double best = 1e9;
      std::size_t bi = 0;
      for (std::size_t i = 0; i < dets.size(); ++i) {
        if (used[i]) continue;
        const double d = std::hypot(dets[i].cx - a.cx, dets[i].cy - a.cy);
        if (d < best) {
          best = d;
          bi = i;
        }
      }
      used[bi] = true;
      CHECK(best <= 2.0);
      CHECK(std::fabs(dets[bi].w - a.w) <= 0.10 * a.w + 1e-9);
      CHECK(std::fabs(dets[bi].h - a.h) <= 0.10 * a.h + 1e-9);
    }
  }
}
