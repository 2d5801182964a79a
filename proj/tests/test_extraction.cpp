#include <cmath>
#include <random>

#include "doctest.h"
#include "joined/extraction.hpp"
#include "joined/geometry.hpp"
#include "joined/targets.hpp"

using namespace joined;
using namespace joined::extraction;

namespace {

Tensor two_channel(const Tensor& a, const Tensor& b) {
  Tensor t(1, 2, a.h(), a.w());
  std::copy(a.values().begin(), a.values().end(), t.plane(0, 0).begin());
  std::copy(b.values().begin(), b.values().end(), t.plane(0, 1).begin());
  return t;
}

}  // namespace

TEST_CASE("heatmap peaks") {
  Tensor delta(1, 2, 16, 16);
  delta(0, 0, 3, 7) = 1.0f;
  delta(0, 1, 12, 2) = 0.7f;
  const auto e = coords_from_heatmap(delta);
  CHECK(e.od == Coordinate{7, 3});
  CHECK(e.fovea == Coordinate{2, 12});
  CHECK(e.confidence_od == doctest::Approx(1.0));
  CHECK(e.confidence_fovea == doctest::Approx(0.7));

  const auto g = targets::gaussian_heatmap(40, 40, Coordinate{20, 11}, 2.0);
  const auto ge = coords_from_heatmap(two_channel(g, g));
  CHECK(ge.od == Coordinate{20, 11});

  Tensor tie(1, 2, 16, 16);
  tie(0, 0, 5, 4) = 1.0f;
  tie(0, 0, 5, 9) = 1.0f;
  CHECK(coords_from_heatmap(tie).od.x == 4);

  Tensor big(1, 2, 4, 4, 3.0f);
  CHECK(coords_from_heatmap(big).confidence_od == 1.0);
  CHECK_THROWS_AS(coords_from_heatmap(Tensor(1, 1, 4, 4)), std::invalid_argument);
}

TEST_CASE("axis accumulation agrees with the 2-D argmax on gaussians") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const int h = 64, w = 80;
    const Coordinate c{std::uniform_real_distribution<double>(3, w - 4)(rng),
                       std::uniform_real_distribution<double>(3, h - 4)(rng)};
    const double sigma = std::uniform_real_distribution<double>(1, 6)(rng);
    const auto g = targets::gaussian_heatmap(h, w, c, sigma);
    const auto e = coords_from_heatmap(two_channel(g, g));
    const auto best = std::max_element(g.values().begin(), g.values().end()) - g.values().begin();
    CHECK(std::abs(e.od.x - best % w) <= 1);
    CHECK(std::abs(e.od.y - best / w) <= 1);
  }
}

TEST_CASE("distance map peaks") {
  const auto d = targets::make_distance_map(64, 64, {Coordinate{10, 10}, Coordinate{40, 40}});
  const auto p = peaks_from_distance_map(d.values);
  CHECK_FALSE(p.degenerate);
  const bool order_a = p.first == Coordinate{10, 10} && p.second == Coordinate{40, 40};
  const bool order_b = p.first == Coordinate{40, 40} && p.second == Coordinate{10, 10};
  CHECK((order_a || order_b));

  const auto flat = peaks_from_distance_map(Tensor(1, 1, 8, 8, 0.5f));
  CHECK(flat.degenerate);
  CHECK(flat.first == Coordinate{0, 0});
  CHECK(flat.second == Coordinate{0, 0});

  // One landmark: the runner-up sits just outside the suppression disk.
  const auto one = targets::make_distance_map(64, 64, {Coordinate{32, 32}, std::nullopt});
  const auto q = peaks_from_distance_map(one.values);
  CHECK(q.first == Coordinate{32, 32});
  const double r = std::hypot(q.second.x - 32, q.second.y - 32);
  CHECK(r > 8.0);
  CHECK(r < 10.0);
}

TEST_CASE("pairing by minimal total distance") {
  const DistancePeaks peaks{{10, 10}, {40, 40}, false};
  LandmarkEstimate det{{11, 9}, {39, 41}};
  auto o = pair_consistency(det, peaks);
  CHECK(o.od == Coordinate{10, 10});
  CHECK(o.fovea == Coordinate{40, 40});

  std::swap(det.od, det.fovea);
  o = pair_consistency(det, peaks);
  CHECK(o.od == Coordinate{40, 40});
  CHECK(o.fovea == Coordinate{10, 10});

  // Permuting the peaks does not change the answer.
  const auto swapped = pair_consistency(det, {peaks.second, peaks.first, false});
  CHECK(swapped.od == o.od);
  CHECK(swapped.fovea == o.fovea);

  // Equidistant: od takes the first peak.
  const LandmarkEstimate mid{{25, 25}, {25, 25}};
  const auto tie = pair_consistency(mid, peaks);
  CHECK(tie.od == Coordinate{10, 10});
  CHECK(pair_consistency(mid, peaks).od == tie.od);
}

TEST_CASE("fovea fallback") {
  const auto f = fovea_fallback({50, 128}, 256, 256);
  CHECK(f.x == doctest::Approx(50 + 0.3 * 256));
  CHECK(f.y == doctest::Approx(128));
  const auto m = fovea_fallback({205, 128}, 256, 256);
  CHECK(m.x == doctest::Approx(205 - 0.3 * 256));

  FallbackParams far{0.05, 2.0, 0.0};
  CHECK(fovea_fallback({50, 128}, 256, 256, far).x == doctest::Approx(255));
  FallbackParams down{0.05, 0.3, 5.0};
  CHECK(fovea_fallback({50, 128}, 256, 256, down).y == doctest::Approx(255));

  LandmarkEstimate e{{50, 128}, {200, 10}, 0.9, 0.01};
  apply_fovea_fallback(e, 256, 256, {});
  CHECK(e.fovea_via_fallback);
  CHECK(e.fovea.x == doctest::Approx(126.8));

  LandmarkEstimate ok{{50, 128}, {200, 10}, 0.9, 0.05};
  apply_fovea_fallback(ok, 256, 256, {});
  CHECK_FALSE(ok.fovea_via_fallback);
  CHECK(ok.fovea == Coordinate{200, 10});
}

TEST_CASE("ensemble is the mean and commutes with uncropping") {
  CHECK(ensemble_coords({10, 10}, {12, 14}) == Coordinate{11, 12});
  CHECK(ensemble_coords({3.5, 7}, {3.5, 7}) == Coordinate{3.5, 7});

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 128);
  for (int t = 0; t < 50; ++t) {
    const auto box = geometry::crop_roi({u(rng) + 64, u(rng) + 64}, 128, 300, 300);
    const Coordinate a{u(rng), u(rng)}, b{u(rng), u(rng)};
    const auto x = box.uncrop(ensemble_coords(a, b));
    const auto y = ensemble_coords(box.uncrop(a), box.uncrop(b));
    CHECK(std::abs(x.x - y.x) < 1e-9);
    CHECK(std::abs(x.y - y.y) < 1e-9);
  }
}
