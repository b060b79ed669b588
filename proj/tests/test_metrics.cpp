#include <doctest.h>

#include <cmath>

#include "advmim/metrics.hpp"
#include "advmim/tensor.hpp"

using namespace advmim;

namespace {

// O(n^2) double-loop oracle, independent of the EDT implementation
double brute_hausdorff(const std::vector<std::pair<int, int>>& a,
                       const std::vector<std::pair<int, int>>& b) {
  auto directed = [](const std::vector<std::pair<int, int>>& p,
                     const std::vector<std::pair<int, int>>& q) {
    double worst = 0;
    for (const auto& [pi, pj] : p) {
      double best = 1e300;
      for (const auto& [qi, qj] : q) {
        double di = pi - qi, dj = pj - qj;
        best = std::min(best, di * di + dj * dj);
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(a, b), directed(b, a)));
}

std::vector<int> mask_from_points(const std::vector<std::pair<int, int>>& pts, int h, int w) {
  std::vector<int> m(static_cast<std::size_t>(h) * w, 0);
  for (const auto& [i, j] : pts) m[static_cast<std::size_t>(i) * w + j] = 1;
  return m;
}

}  // namespace

TEST_CASE("dice_score closed forms") {
  std::vector<int> a = {1, 1, 0, 0}, b = {1, 0, 1, 0};
  CHECK(dice_score(a, a, 1) == 1.0);
  std::vector<int> d1 = {1, 0, 0, 0}, d2 = {0, 0, 0, 1};
  CHECK(dice_score(d1, d2, 1) == 0.0);
  // |P|=2, |G|=1, overlap 1 -> 2/3
  std::vector<int> p = {1, 1, 0, 0}, g = {1, 0, 0, 0};
  CHECK(dice_score(p, g, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  // conventions
  std::vector<int> empty = {0, 0, 0, 0};
  CHECK(dice_score(empty, empty, 1) == 1.0);
  CHECK(dice_score(p, empty, 1) == 0.0);
}

TEST_CASE("hausdorff closed forms") {
  std::vector<std::pair<int, int>> a = {{0, 0}, {1, 2}};
  CHECK(hausdorff_distance(a, a) == 0.0);
  CHECK(hausdorff_distance({{0, 0}}, {{3, 4}}) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(hausdorff_distance({}, {}) == 0.0);
  CHECK(std::isinf(hausdorff_distance({{0, 0}}, {})));
}

TEST_CASE("EDT hausdorff equals brute force on 100 random point sets") {
  const int h = 20, w = 20;
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    auto draw = [&]() {
      int n = 1 + rng.uniform_int(50);
      std::vector<std::pair<int, int>> pts;
      for (int k = 0; k < n; ++k) pts.push_back({rng.uniform_int(h), rng.uniform_int(w)});
      return pts;
    };
    auto pa = draw(), pb = draw();
    double oracle = brute_hausdorff(pa, pb);
    CHECK(hausdorff_distance(pa, pb) == oracle);  // exact
    double via_masks =
        hausdorff_masks(mask_from_points(pa, h, w), mask_from_points(pb, h, w), h, w, 1);
    CHECK(via_masks == oracle);
  }
}

TEST_CASE("hausdorff symmetry and joint flip invariance") {
  const int h = 16, w = 16;
  Rng rng(103);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> a(static_cast<std::size_t>(h) * w, 0), b = a;
    for (int k = 0; k < 30; ++k) {
      a[static_cast<std::size_t>(rng.uniform_int(h * w))] = 1;
      b[static_cast<std::size_t>(rng.uniform_int(h * w))] = 1;
    }
    double ab = hausdorff_masks(a, b, h, w, 1);
    double ba = hausdorff_masks(b, a, h, w, 1);
    CHECK(ab == ba);
    auto fliph = [&](const std::vector<int>& m) {
      std::vector<int> out(m.size());
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          out[static_cast<std::size_t>(i) * w + j] = m[static_cast<std::size_t>(i) * w + (w - 1 - j)];
      return out;
    };
    CHECK(hausdorff_masks(fliph(a), fliph(b), h, w, 1) == ab);
    CHECK(dice_score(fliph(a), fliph(b), 1) == dice_score(a, b, 1));
  }
}

TEST_CASE("empty-set sentinel is the image diagonal and is flagged") {
  const int h = 8, w = 8;
  std::vector<int> empty(static_cast<std::size_t>(h) * w, 0), one = empty;
  one[10] = 1;
  bool flag = false;
  double hd = hausdorff_masks(one, empty, h, w, 1, 100.0, &flag);
  CHECK(flag);
  CHECK(hd == doctest::Approx(std::sqrt(49.0 + 49.0)).epsilon(1e-12));
  flag = true;
  CHECK(hausdorff_masks(empty, empty, h, w, 1, 100.0, &flag) == 0.0);
  CHECK(!flag);
}

TEST_CASE("hd95 percentile never exceeds the exact distance") {
  const int h = 16, w = 16;
  Rng rng(104);
  std::vector<int> a(static_cast<std::size_t>(h) * w, 0), b = a;
  for (int k = 0; k < 40; ++k) {
    a[static_cast<std::size_t>(rng.uniform_int(h * w))] = 1;
    b[static_cast<std::size_t>(rng.uniform_int(h * w))] = 1;
  }
  CHECK(hausdorff_masks(a, b, h, w, 1, 95.0) <= hausdorff_masks(a, b, h, w, 1, 100.0));
}

TEST_CASE("metrics_report conventions and hand aggregation") {
  const int h = 4, w = 4, m = 3;
  std::vector<int> gt(static_cast<std::size_t>(h) * w, 0);
  gt[5] = 1;
  gt[6] = 2;
  // perfect single sample
  MetricsReport perfect = metrics_report({gt}, {gt}, h, w, m);
  CHECK(perfect.mean_dice == 1.0);
  CHECK(perfect.mean_hd == 0.0);
  CHECK(perfect.per_class_dice.size() == 2);  // background excluded

  // both-empty class convention: dice 1, hd 0
  std::vector<int> bg(static_cast<std::size_t>(h) * w, 0);
  bg[5] = 1;  // class 2 empty in both
  MetricsReport r = metrics_report({bg}, {bg}, h, w, m);
  CHECK(r.per_class_dice[1] == 1.0);
  CHECK(r.per_class_hd[1] == 0.0);

  // mixed batch vs hand-aggregated oracle
  std::vector<int> p1 = gt, p2 = gt;
  p2[5] = 0;  // class 1 missed in sample 2
  MetricsReport mixed = metrics_report({p1, p2}, {gt, gt}, h, w, m);
  double d1 = (dice_score(p1, gt, 1) + dice_score(p2, gt, 1)) / 2.0;
  double d2 = (dice_score(p1, gt, 2) + dice_score(p2, gt, 2)) / 2.0;
  CHECK(mixed.per_class_dice[0] == doctest::Approx(d1).epsilon(1e-12));
  CHECK(mixed.mean_dice == doctest::Approx((d1 + d2) / 2.0).epsilon(1e-12));

  CHECK_THROWS_AS(metrics_report({gt}, {gt, gt}, h, w, m), ConfigError);
}
