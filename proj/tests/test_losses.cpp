#include <cmath>
#include <random>

#include "doctest.h"
#include "joined/losses.hpp"
#include "joined/targets.hpp"

using namespace joined;
using namespace joined::losses;

namespace {

using DTensor = BasicTensor<double>;

DTensor random_soft(int h, int w, std::mt19937_64& rng) {
  DTensor t(1, 1, h, w);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

}  // namespace

TEST_CASE("mse examples") {
  const std::vector<double> a{0, 0}, b{3, 4};
  CHECK(mse<double>(a, a) == 0.0);
  CHECK(mse<double>(a, b) == doctest::Approx(12.5));
  CHECK(coordinate_mse(Coordinate{0, 0}, Coordinate{1, 1}) == doctest::Approx(1.0));
  const std::vector<double> c{1, 2, 3};
  CHECK_THROWS_AS(mse<double>(a, c), std::invalid_argument);
}

TEST_CASE("dice loss examples") {
  std::vector<double> m(400, 0.0);
  for (int i = 0; i < 150; ++i) m[i] = 1.0;
  CHECK(dice_loss<double>(m, m) <= 1e-5);

  std::vector<double> other(400, 0.0);
  for (int i = 200; i < 300; ++i) other[i] = 1.0;
  CHECK(dice_loss<double>(m, other) == doctest::Approx(1.0).epsilon(1e-5));

  // 2x2 all ones against one column.
  const std::vector<double> ones{1, 1, 1, 1}, column{1, 0, 1, 0};
  CHECK(dice_loss<double>(ones, column) == doctest::Approx(1.0 - 4.0 / 6.0).epsilon(1e-5));
  CHECK(dice_loss<double>(ones, column) == doctest::Approx(dice_loss<double>(column, ones)));

  // Nested masks: more overlap never raises the loss.
  std::vector<double> grow(400, 0.0);
  double prev = 2.0;
  for (int k = 0; k < 150; k += 10) {
    for (int i = 0; i < k; ++i) grow[i] = 1.0;
    const double l = dice_loss<double>(m, grow);
    CHECK(l <= prev + 1e-12);
    prev = l;
  }
}

TEST_CASE("multi-channel dice averages the channels") {
  DTensor m(1, 2, 2, 2), p(1, 2, 2, 2);
  for (int i = 0; i < 4; ++i) m.plane(0, 0)[i] = 1.0;
  p.plane(0, 0)[0] = 1.0;
  p.plane(0, 0)[2] = 1.0;
  m.plane(0, 1)[1] = 1.0;
  p.plane(0, 1)[1] = 1.0;
  const double expect = ((1.0 - 4.0 / 6.0) + 0.0) / 2.0;
  CHECK(dice_loss(m, p) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("predictor loss skips unsupervised samples") {
  Tensor gt(2, 1, 2, 2), pred(2, 1, 2, 2);
  pred.sample(0)[0] = 2.0f;  // contributes 4/4 = 1
  pred.sample(1)[0] = 5.0f;  // unsupervised
  CHECK(loss_p(gt, pred, {true, false}) == doctest::Approx(1.0));
  CHECK(loss_p(gt, pred, {false, false}) == 0.0);
  Tensor g(gt.shape());
  loss_p(gt, pred, {true, false}, &g);
  for (float v : g.sample(1)) CHECK(v == 0.0f);
  CHECK_THROWS_AS(loss_p(gt, pred, {true}), std::invalid_argument);
}

TEST_CASE("detector loss on a perfect prediction leaves the dice residual") {
  const auto t = targets::make_detection_target(32, 32, {Coordinate{8, 9}, Coordinate{22, 20}}, 2.0);
  const auto& h = t.heatmap.channels;
  const auto& m = t.mask.channels;
  CoordinatePair c{{0.2, 0.3}, {0.7, 0.6}};
  const auto terms = loss_d(h, h, {c}, {c}, m);
  CHECK(terms.heatmap_mse == 0.0);
  CHECK(terms.coordinate_mse == 0.0);

  double expect = 0;
  for (int ch = 0; ch < 2; ++ch) {
    double inter = 0, total = 0;
    for (std::size_t i = 0; i < h.plane(0, ch).size(); ++i) {
      inter += m.plane(0, ch)[i] * h.plane(0, ch)[i];
      total += m.plane(0, ch)[i] + h.plane(0, ch)[i];
    }
    expect += (1.0 - 2.0 * inter / (total + kDiceEps)) / 2.0;
  }
  CHECK(terms.dice > 0.0);
  CHECK(terms.dice == doctest::Approx(expect).epsilon(1e-6));
  CHECK(terms.total() == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("detector loss with an absent fovea channel") {
  const auto t = targets::make_detection_target(16, 16, {Coordinate{8, 8}, std::nullopt}, 2.0);
  Tensor pred = t.heatmap.channels;
  const auto terms = loss_d(t.heatmap.channels, pred, {}, {}, t.mask.channels);
  CHECK(terms.heatmap_mse == 0.0);
  // Zero-target channel: 1 - 0 / (0 + eps) = 1.
  double inter = 0, total = 0;
  for (std::size_t i = 0; i < pred.plane(0, 0).size(); ++i) {
    inter += t.mask.channels.plane(0, 0)[i] * pred.plane(0, 0)[i];
    total += t.mask.channels.plane(0, 0)[i] + pred.plane(0, 0)[i];
  }
  const double od = 1.0 - 2.0 * inter / (total + kDiceEps);
  CHECK(terms.dice == doctest::Approx((od + 1.0) / 2.0).epsilon(1e-6));
}

TEST_CASE("segmentor loss") {
  LabelMask mask(2, 2);
  mask(0, 0) = Label::OC;
  mask(0, 1) = Label::OD;
  const Tensor gt = targets::one_hot(mask);
  CHECK(loss_s(gt, gt) <= 1e-6);

  // Uniform 1/3: OC and rim 1 - (2/3)/(7/3) = 5/7, background 1 - (4/3)/(10/3) = 0.6.
  Tensor uniform(gt.shape(), 1.0f / 3.0f);
  CHECK(loss_s(gt, uniform) == doctest::Approx((5.0 / 7.0 + 5.0 / 7.0 + 0.6) / 3.0).epsilon(1e-5));

  // All background and a perfect prediction: empty channels score 1 each.
  const Tensor bg = targets::one_hot(LabelMask(4, 4));
  CHECK(loss_s(bg, bg) == doctest::Approx(2.0 / 3.0).epsilon(1e-5));
  CHECK_THROWS_AS(loss_s(Tensor(1, 2, 2, 2), Tensor(1, 2, 2, 2)), std::invalid_argument);
}

TEST_CASE("fine localizer loss") {
  Tensor h(1, 1, 4, 4);
  CHECK(loss_flm({0.3, 0.3}, {0.3, 0.3}, h, h) == 0.0);
  CHECK(loss_flm({0, 0}, {0.6, 0.8}, h, h) == doctest::Approx(0.5));
  Tensor p(1, 1, 4, 4);
  p(0, 0, 0, 0) = 4.0f;
  CHECK(loss_flm({0, 0}, {0, 0}, h, p) == doctest::Approx(1.0));
}

TEST_CASE("progressive schedule") {
  const LossWeights w;
  CHECK(w.tau0 == 50);
  CHECK(w.tau1 == 100);
  CHECK(w.lambda0 == 1.0);
  CHECK(w.lambda1 == 1.0);
  const BranchSet p{Branch::Predictor}, pd{Branch::Predictor, Branch::Detector};
  CHECK(jsdm_schedule(1, w) == p);
  CHECK(jsdm_schedule(30, w) == p);
  CHECK(jsdm_schedule(50, w) == p);
  CHECK(jsdm_schedule(51, w) == pd);
  CHECK(jsdm_schedule(75, w) == pd);
  CHECK(jsdm_schedule(100, w) == pd);
  CHECK(jsdm_schedule(101, w) == BranchSet::all());
  CHECK(jsdm_schedule(150, w) == BranchSet::all());
  CHECK(jsdm_schedule(0, w) == p);
  CHECK(p.str() == "{P}");
  CHECK(BranchSet::all().str() == "{P,D,S}");
}

TEST_CASE("schedule truncations for ablated branches") {
  const LossWeights w;
  const BranchSet no_p{Branch::Detector, Branch::Segmentor};
  CHECK(jsdm_schedule(1, w, no_p) == BranchSet{Branch::Detector});
  CHECK(jsdm_schedule(100, w, no_p) == BranchSet{Branch::Detector});
  CHECK(jsdm_schedule(101, w, no_p) == no_p);
  const BranchSet no_d{Branch::Predictor, Branch::Segmentor};
  CHECK(jsdm_schedule(75, w, no_d) == BranchSet{Branch::Predictor});
  CHECK(jsdm_schedule(101, w, no_d) == no_d);
  CHECK(activation_epoch(Branch::Segmentor, w, no_d) == 101);
  CHECK(activation_epoch(Branch::Detector, w, no_d) == -1);
  CHECK(activation_epoch(Branch::Detector, w, no_p) == 1);
  const BranchSet s_only{Branch::Segmentor};
  CHECK(jsdm_schedule(1, w, s_only) == s_only);
  for (int e = 1; e <= 200; ++e) CHECK(jsdm_schedule(e, w, BranchSet::all()) == jsdm_schedule(e, w));
}

TEST_CASE("weights validation and combination") {
  LossWeights w;
  w.tau0 = 100;
  w.tau1 = 50;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = {};
  w.lambda0 = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);

  LossWeights k{0.5, 2.0, 50, 100};
  const auto all = combine(0.1, 0.2, 0.3, BranchSet::all(), k);
  CHECK(all.total == doctest::Approx(0.1 + 0.5 * 0.2 + 2.0 * 0.3).epsilon(1e-12));
  const auto p_only = combine(0.1, 0.2, 0.3, {Branch::Predictor}, k);
  CHECK(p_only.l_d == 0.0);
  CHECK(p_only.l_s == 0.0);
  CHECK(p_only.total == doctest::Approx(0.1));
}

TEST_CASE("coordinate normalization") {
  const auto n = normalize({255, 127.5}, 256, 256);
  CHECK(n.x == doctest::Approx(1.0));
  CHECK(n.y == doctest::Approx(0.5));
  const auto back = denormalize(n, 256, 256);
  CHECK(back.x == doctest::Approx(255));
  CHECK(back.y == doctest::Approx(127.5));
}

TEST_CASE("dice and mse gradients match central differences on 8x8 inputs") {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    const DTensor m = random_soft(8, 8, rng);
    DTensor p = random_soft(8, 8, rng);
    DTensor gd(p.shape()), gm(p.shape());
    dice_loss(m, p, kDiceEps, &gd);
    mse(m, p, &gm);
    double worst_d = 0, worst_m = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.values()[i];
      p.values()[i] = keep + h;
      const double dp = dice_loss(m, p), mp = mse(m, p);
      p.values()[i] = keep - h;
      const double dm = dice_loss(m, p), mm = mse(m, p);
      p.values()[i] = keep;
      worst_d = std::max(worst_d, rel_err(gd.values()[i], (dp - dm) / (2 * h)));
      worst_m = std::max(worst_m, rel_err(gm.values()[i], (mp - mm) / (2 * h)));
    }
    CHECK(worst_d < 1e-4);
    CHECK(worst_m < 1e-4);
  }
}
