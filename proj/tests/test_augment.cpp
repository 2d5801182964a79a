#include <cmath>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "joined/augment.hpp"
#include "joined/extraction.hpp"
#include "joined/targets.hpp"

using namespace joined;
using namespace joined::augment;

namespace {

AugmentSample sample_with(Coordinate od, Coordinate fovea, int n = 96) {
  AugmentSample s;
  s.image = Tensor(1, 3, n, n, 0.4f);
  s.landmarks = {od, fovea};
  s.heatmap = targets::make_detection_target(n, n, s.landmarks, 3.0).heatmap.channels;
  LabelMask m(n, n);
  for (int y = -5; y <= 5; ++y)
    for (int x = -5; x <= 5; ++x) m(static_cast<int>(od.y) + y, static_cast<int>(od.x) + x) = Label::OD;
  m(static_cast<int>(od.y), static_cast<int>(od.x)) = Label::OC;
  s.mask = m;
  return s;
}

}  // namespace

TEST_CASE("the empty policy is the identity") {
  std::mt19937_64 rng(1);
  const auto s = sample_with({30, 40}, {60, 50});
  const auto out = augment::augment(s, AugmentPolicy::none(), rng);
  CHECK(same(out.image.values(), s.image.values()));
  CHECK(out.landmarks.od_center == s.landmarks.od_center);
  CHECK(same(out.heatmap->values(), s.heatmap->values()));
}

TEST_CASE("flips move landmarks exactly") {
  AugmentDraw d;
  d.hflip = true;
  const auto out = apply(d, sample_with({30, 40}, {60, 50}));
  CHECK(out.landmarks.od_center->x == doctest::Approx(95 - 30));
  CHECK(out.landmarks.od_center->y == doctest::Approx(40));
  CHECK((*out.mask)(40, 65) == Label::OC);
}

TEST_CASE("heatmap peaks follow the landmark transform") {
  std::mt19937_64 rng(7);
  const AugmentPolicy policy;
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    std::uniform_real_distribution<double> u(25, 70);
    const auto s = sample_with({std::round(u(rng)), std::round(u(rng))},
                               {std::round(u(rng)), std::round(u(rng))});
    const auto d = draw(policy, rng);
    const auto out = apply(d, s);
    if (!out.landmarks.od_center || !out.landmarks.fovea) continue;
    const auto e = extraction::coords_from_heatmap(*out.heatmap);
    CHECK(std::abs(e.od.x - out.landmarks.od_center->x) <= 1.0);
    CHECK(std::abs(e.od.y - out.landmarks.od_center->y) <= 1.0);
    CHECK(std::abs(e.fovea.x - out.landmarks.fovea->x) <= 1.0);
    CHECK(std::abs(e.fovea.y - out.landmarks.fovea->y) <= 1.0);
    ++checked;
  }
  CHECK(checked > 90);
}

TEST_CASE("landmarks pushed out of frame become absent") {
  AugmentDraw d;
  d.scale = 2.0;
  const auto out = apply(d, sample_with({10, 10}, {48, 48}));
  CHECK_FALSE(out.landmarks.od_center.has_value());
  CHECK(out.landmarks.fovea.has_value());
}

TEST_CASE("photometric draws leave geometry alone") {
  AugmentDraw d;
  d.brightness = 0.1;
  d.gamma = 0.2;
  const auto s = sample_with({30, 40}, {60, 50});
  const auto out = apply(d, s);
  CHECK(*out.mask == *s.mask);
  CHECK_FALSE(same(out.image.values(), s.image.values()));
  for (float v : out.image.values()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("draws are reproducible from the generator state") {
  std::mt19937_64 a(5), b(5);
  const AugmentPolicy policy;
  for (int i = 0; i < 20; ++i) {
    const auto x = draw(policy, a), y = draw(policy, b);
    CHECK(x.angle_rad == y.angle_rad);
    CHECK(x.hflip == y.hflip);
    CHECK(std::abs(x.angle_rad) <= 15.0 * M_PI / 180.0 + 1e-12);
    CHECK((x.scale >= policy.scale_min && x.scale <= policy.scale_max));
  }
}
