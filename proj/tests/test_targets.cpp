#include <cmath>
#include <random>

#include "doctest.h"
#include "joined/targets.hpp"

using namespace joined;
using namespace joined::targets;

namespace {

// Straight double loop: nearest landmark distance, then 1 - D / max D.
std::vector<double> brute_distance(int h, int w, const std::vector<Coordinate>& pts) {
  std::vector<double> d(static_cast<std::size_t>(h) * w);
  double mx = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double best = 1e300;
      for (const auto& p : pts) {
        const double dx = x - p.x, dy = y - p.y;
        best = std::min(best, std::sqrt(dx * dx + dy * dy));
      }
      d[y * w + x] = best;
      mx = std::max(mx, best);
    }
  }
  for (auto& v : d) v = 1.0 - v / mx;
  return d;
}

LabelMask box_mask(int h, int w, int x0, int x1, int y0, int y1, Label l = Label::OD) {
  LabelMask m(h, w);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m(y, x) = l;
  return m;
}

}  // namespace

TEST_CASE("od center is the bounding box midpoint of disc pixels") {
  CHECK(*od_center_from_mask(box_mask(20, 20, 2, 6, 10, 14)) == Coordinate{4.0, 12.0});
  CHECK(*od_center_from_mask(box_mask(20, 20, 5, 5, 7, 7)) == Coordinate{5.0, 7.0});
  CHECK_FALSE(od_center_from_mask(LabelMask(8, 8)).has_value());

  // Cup pixels count toward the disc.
  auto m = box_mask(20, 20, 4, 8, 4, 8);
  m(15, 12) = Label::OC;
  CHECK(*od_center_from_mask(m) == Coordinate{8.0, 9.5});
}

TEST_CASE("distance map on a 5x5 grid") {
  LandmarkAnnotation a{Coordinate{1, 1}, Coordinate{3, 3}};
  const auto d = make_distance_map(5, 5, a);
  CHECK(d.supervised);
  CHECK(d.values(0, 0, 1, 1) == 1.0f);
  CHECK(d.values(0, 0, 3, 3) == 1.0f);
  const auto ref = brute_distance(5, 5, {{1, 1}, {3, 3}});
  for (int i = 0; i < 25; ++i) CHECK(d.values.values()[i] == doctest::Approx(ref[i]).epsilon(1e-6));

  const auto single = make_distance_map(5, 5, {std::nullopt, Coordinate{2, 2}});
  for (auto [x, y] : {std::pair{0, 0}, {4, 0}, {0, 4}, {4, 4}}) {
    CHECK(single.values(0, 0, y, x) == doctest::Approx(0.0).epsilon(1e-7));
  }
}

TEST_CASE("distance map matches the brute-force oracle on random instances") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 30; ++t) {
    const int h = std::uniform_int_distribution<int>(2, 64)(rng);
    const int w = std::uniform_int_distribution<int>(2, 64)(rng);
    std::uniform_real_distribution<double> ux(0, w - 1), uy(0, h - 1);
    LandmarkAnnotation a;
    if (t % 3 != 1) a.od_center = Coordinate{ux(rng), uy(rng)};
    if (t % 3 != 2) a.fovea = Coordinate{ux(rng), uy(rng)};
    std::vector<Coordinate> pts;
    if (a.od_center) pts.push_back(*a.od_center);
    if (a.fovea) pts.push_back(*a.fovea);
    const auto d = make_distance_map(h, w, a);
    const auto ref = brute_distance(h, w, pts);
    double worst = 0, lo = 1, hi = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      worst = std::max(worst, std::abs(d.values.values()[i] - ref[i]));
      lo = std::min<double>(lo, d.values.values()[i]);
      hi = std::max<double>(hi, d.values.values()[i]);
    }
    CHECK(worst < 1e-6);
    CHECK(lo == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(hi <= 1.0);
  }
}

TEST_CASE("no landmark gives an unsupervised all-zero map") {
  const auto d = make_distance_map(6, 7, {});
  CHECK_FALSE(d.supervised);
  for (float v : d.values.values()) CHECK(v == 0.0f);
}

TEST_CASE("gaussian heatmap peak, radius and absence") {
  const double sigma = 3.0;
  const auto g = gaussian_heatmap(40, 40, Coordinate{20, 15}, sigma);
  CHECK(g(0, 0, 15, 20) == 1.0f);
  CHECK(g(0, 0, 15, 23) == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
  CHECK(g(0, 0, 18, 20) == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
  for (int d = 1; d < 10; ++d) {
    CHECK(std::abs(g(0, 0, 15, 20 + d) - g(0, 0, 15, 20 - d)) < 1e-9);
    CHECK(std::abs(g(0, 0, 15 + d, 20) - g(0, 0, 15 - d, 20)) < 1e-9);
  }
  // Off-grid center: the maximum is 1 at the rounded pixel.
  const auto off = gaussian_heatmap(30, 30, Coordinate{10.3, 7.6}, 2.0);
  CHECK(off(0, 0, 8, 10) == 1.0f);

  const auto none = gaussian_heatmap(10, 10, std::nullopt, 2.0);
  for (float v : none.values()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(gaussian_heatmap(10, 10, Coordinate{1, 1}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_heatmap(10, 10, Coordinate{1, 1}, -1.0), std::invalid_argument);
}

TEST_CASE("detection target channels and their 0.5 level set") {
  const double sigma = 4.0;
  const auto t = make_detection_target(64, 64, {Coordinate{20, 30}, Coordinate{45, 30}}, sigma);
  CHECK(t.heatmap.channels(0, 0, 30, 20) == 1.0f);
  CHECK(t.heatmap.channels(0, 1, 30, 45) == 1.0f);

  // exp(-r^2 / 2 sigma^2) = 0.5 at r = sigma * sqrt(2 ln 2).
  const double r = sigma * std::sqrt(2.0 * std::log(2.0));
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const double d = std::hypot(x - 20.0, y - 30.0);
      const float m = t.mask.channels(0, 0, y, x);
      if (d < r - 1) CHECK(m == 1.0f);
      if (d > r + 1) CHECK(m == 0.0f);
    }
  }
  // Re-thresholding the mask is idempotent.
  CHECK(threshold(t.mask.channels).values().size() == t.mask.channels.values().size());
  const auto again = threshold(t.mask.channels);
  CHECK(std::equal(again.values().begin(), again.values().end(), t.mask.channels.values().begin()));

  const auto missing = make_detection_target(32, 32, {Coordinate{5, 5}, std::nullopt}, 2.0);
  for (float v : missing.heatmap.channels.plane(0, 1)) CHECK(v == 0.0f);
  for (float v : missing.mask.channels.plane(0, 1)) CHECK(v == 0.0f);
}

TEST_CASE("one-hot order is cup, rim, background") {
  LabelMask m(2, 2);
  m(0, 0) = Label::OC;
  m(0, 1) = Label::OD;
  const auto t = one_hot(m);
  CHECK(t(0, 0, 0, 0) == 1.0f);
  CHECK(t(0, 1, 0, 1) == 1.0f);
  CHECK(t(0, 2, 1, 0) == 1.0f);
  CHECK(t(0, 2, 0, 0) == 0.0f);
  CHECK(default_sigma(256) == doctest::Approx(2.56));
}
