#include <cmath>
#include <random>

#include "doctest.h"
#include "joined/losses.hpp"
#include "joined/metrics.hpp"
#include "metrics_fixture.hpp"

using namespace joined;
using namespace joined::metrics;

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace

TEST_CASE("hand-scored fixture") {
  const auto c = fixture::three_images();
  const auto r = evaluate(c.preds, c.gts);
  REQUIRE(r.images.size() == 3);

  const auto& a = r.images[0];
  CHECK(round4(*a.fovea_aed) == 5.0);
  CHECK(round4(*a.od_aed) == 0.5);
  CHECK(round4(*a.od_dice) == 0.9333);
  CHECK(round4(*a.oc_dice) == 0.8889);
  CHECK(round4(*a.abs_vcdr_err) == 0.2143);

  const auto& b = r.images[1];
  CHECK(round4(*b.fovea_aed) == 0.0);
  CHECK(round4(*b.od_aed) == 1.0);
  CHECK(round4(*b.od_dice) == 0.875);
  CHECK(round4(*b.oc_dice) == 0.0);
  CHECK_FALSE(b.abs_vcdr_err.has_value());

  const auto& cc = r.images[2];
  CHECK_FALSE(cc.fovea_aed.has_value());
  CHECK(round4(*cc.od_dice) == 0.9091);
  CHECK(round4(*cc.oc_dice) == 0.8571);
  CHECK(round4(*cc.abs_vcdr_err) == 0.1667);

  CHECK(round4(r.fovea_aed.mean) == 2.5);
  CHECK(round4(r.fovea_aed.std) == 2.5);
  CHECK(r.fovea_aed.count == 2);
  CHECK(round4(r.od_aed.mean) == 0.6667);
  CHECK(round4(r.od_aed.std) == 0.2357);
  CHECK(round4(r.od_dice.mean) == 0.9058);
  CHECK(round4(r.od_dice.std) == 0.0239);
  CHECK(round4(r.oc_dice.mean) == 0.5820);
  CHECK(round4(r.oc_dice.std) == 0.4117);
  CHECK(round4(r.vcdr_mae.mean) == 0.1905);
  CHECK(round4(r.vcdr_mae.std) == 0.0238);
  CHECK(r.vcdr_mae.count == 2);
  CHECK(r.skipped.at("fovea_aed") == 1);
  CHECK(r.skipped.at("vcdr") == 1);
}

TEST_CASE("ground truth as prediction is perfect") {
  auto c = fixture::three_images();
  for (std::size_t i = 0; i < c.preds.size(); ++i) {
    c.preds[i].mask = *c.gts[i].mask;
    c.preds[i].fovea = c.gts[i].fovea;
    c.preds[i].od_center = c.gts[i].od_center;
    c.preds[i].vcdr = vcdr(*c.gts[i].mask);
  }
  const auto r = evaluate(c.preds, c.gts);
  CHECK(r.od_dice.mean == 1.0);
  CHECK(r.oc_dice.mean == 1.0);
  CHECK(r.fovea_aed.mean == 0.0);
  CHECK(r.od_aed.mean == 0.0);
  CHECK(r.vcdr_mae.mean == 0.0);
  CHECK(render_table(r).find("100.00 ± 0.00") != std::string::npos);
}

TEST_CASE("unmatched ids and the cup-free table") {
  auto c = fixture::three_images();
  c.preds[0].image_id = "zz";
  for (auto& g : c.gts) g.oc_present = false;
  const auto r = evaluate(c.preds, c.gts);
  CHECK(r.unmatched_predictions == std::vector<std::string>{"zz"});
  CHECK(r.unmatched_ground_truth == std::vector<std::string>{"a"});
  CHECK_FALSE(r.has_oc);
  const auto table = render_table(r);
  CHECK(table.find("OC Dice") == std::string::npos);
  CHECK(table.find("OD Dice") != std::string::npos);
  CHECK(render_csv(r).rfind("image_id,fovea_aed", 0) == 0);
}

TEST_CASE("elementary metrics") {
  CHECK(aed({0, 0}, {3, 4}) == 5.0);
  const LabelMask empty(5, 5);
  CHECK(dice_score(empty, empty, Structure::OD) == 1.0);
  CHECK_FALSE(vcdr(empty).has_value());
  const auto s = summarize({1, 2, 3, 4});
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
  CHECK(summarize({}).count == 0);
}

TEST_CASE("dice score and dice loss are dual on binary masks") {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.3);
  for (int t = 0; t < 50; ++t) {
    LabelMask a(16, 16), b(16, 16);
    std::vector<double> fa(256), fb(256);
    for (int i = 0; i < 256; ++i) {
      if (coin(rng)) {
        a(i / 16, i % 16) = Label::OD;
        fa[i] = 1;
      }
      if (coin(rng)) {
        b(i / 16, i % 16) = Label::OD;
        fb[i] = 1;
      }
    }
    const double score = dice_score(b, a, Structure::OD);
    const double loss = losses::dice_loss<double>(fa, fb);
    CHECK(std::abs(score - (1.0 - loss)) < 1e-6);
  }
}
