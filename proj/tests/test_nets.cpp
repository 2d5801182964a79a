#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "joined/nn/checkpoint.hpp"
#include "joined/nn/networks.hpp"

using namespace joined;
using namespace joined::nn;
namespace fs = std::filesystem;

namespace {

template <typename T>
BasicTensor<T> random_input(int n, int c, int h, int w, std::uint64_t seed) {
  BasicTensor<T> x(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : x.values()) v = static_cast<T>(u(rng));
  return x;
}

JsdmSpec small_jsdm(int width = 4, int depth = 3) {
  JsdmSpec s;
  s.encoder = {3, depth, width};
  s.decoder = {width * 2};
  s.input_size = 32;
  return s;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("joined_test_nets_" + name);
  fs::remove_all(p);
  return p;
}

// Fixed random projection of every output: L = sum(w * y).
struct Projection {
  BasicTensor<double> wd, wh, ws;
  explicit Projection(const JsdmOutputs<double>& o) {
    wd = random_input<double>(o.distance.n(), o.distance.c(), o.distance.h(), o.distance.w(), 1);
    wh = random_input<double>(o.heatmap.n(), o.heatmap.c(), o.heatmap.h(), o.heatmap.w(), 2);
    ws = random_input<double>(o.seg.n(), o.seg.c(), o.seg.h(), o.seg.w(), 3);
  }
  double operator()(const JsdmOutputs<double>& o) const {
    double s = 0;
    for (std::size_t i = 0; i < o.distance.size(); ++i) s += wd.values()[i] * o.distance.values()[i];
    for (std::size_t i = 0; i < o.heatmap.size(); ++i) s += wh.values()[i] * o.heatmap.values()[i];
    for (std::size_t i = 0; i < o.seg.size(); ++i) s += ws.values()[i] * o.seg.values()[i];
    return s;
  }
};

}  // namespace

TEST_CASE("jsdm output shapes and ranges") {
  JsdmNet<float> net(small_jsdm(), 1);
  const auto x = random_input<float>(2, 3, 32, 32, 4);
  const auto o = net.forward(x, losses::BranchSet::all(), Mode::Train);
  CHECK(o.distance.shape() == Shape{2, 1, 32, 32});
  CHECK(o.heatmap.shape() == Shape{2, 2, 32, 32});
  CHECK(o.seg.shape() == Shape{2, 3, 32, 32});
  for (float v : o.distance.values()) CHECK((v >= 0.0f && v <= 1.0f));

  const auto p_only = net.forward(x, {losses::Branch::Predictor}, Mode::Eval);
  CHECK_FALSE(p_only.distance.empty());
  CHECK(p_only.heatmap.empty());
  CHECK(p_only.seg.empty());

  CHECK_THROWS_AS(net.forward(random_input<float>(1, 3, 30, 32, 1), losses::BranchSet::all(),
                              Mode::Eval),
                  ConfigError);
  CHECK_THROWS_AS(net.forward(random_input<float>(1, 4, 32, 32, 1), losses::BranchSet::all(),
                              Mode::Eval),
                  std::invalid_argument);
}

TEST_CASE("softmax segmentation sums to one per pixel") {
  auto spec = small_jsdm();
  spec.seg_activation = SegActivation::Softmax;
  JsdmNet<float> net(spec, 2);
  const auto o = net.forward(random_input<float>(1, 3, 32, 32, 5), losses::BranchSet::all(),
                             Mode::Eval);
  const int hw = 32 * 32;
  for (int i = 0; i < hw; ++i) {
    const double s = o.seg.plane(0, 0)[i] + o.seg.plane(0, 1)[i] + o.seg.plane(0, 2)[i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("jsdm parameter gradients match central differences") {
  JsdmNet<double> net(small_jsdm(4, 3), 3);
  const auto x = random_input<double>(2, 3, 32, 32, 6);
  const auto all = losses::BranchSet::all();
  auto o = net.forward(x, all, Mode::Train);
  const Projection proj(o);
  net.zero_grad();
  net.backward({proj.wd, proj.wh, proj.ws});

  std::mt19937_64 rng(8);
  const auto& params = net.params();
  const double h = 1e-5;
  int checked = 0;
  double worst = 0;
  while (checked < 20) {
    auto* p = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
    const auto k = std::uniform_int_distribution<std::size_t>(0, p->value.size() - 1)(rng);
    const double analytic = p->grad.values()[k];
    const double keep = p->value.values()[k];
    p->value.values()[k] = keep + h;
    const double up = proj(net.forward(x, all, Mode::Train));
    p->value.values()[k] = keep - h;
    const double down = proj(net.forward(x, all, Mode::Train));
    p->value.values()[k] = keep;
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, err);
    ++checked;
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("bridge makes heatmaps depend on predictor weights") {
  const auto x = random_input<float>(1, 3, 32, 32, 7);
  const losses::BranchSet pd{losses::Branch::Predictor, losses::Branch::Detector};
  for (bool bridge : {true, false}) {
    auto spec = small_jsdm();
    spec.bridge = bridge;
    JsdmNet<float> net(spec, 9);
    const auto before = net.forward(x, pd, Mode::Eval).heatmap;
    for (auto* p : net.params()) {
      if (p->name.rfind("predictor.", 0) == 0) {
        for (auto& v : p->value.values()) v += 0.05f;
      }
    }
    const auto after = net.forward(x, pd, Mode::Eval).heatmap;
    double diff = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      diff = std::max(diff, double(std::abs(before.values()[i] - after.values()[i])));
    }
    if (bridge) {
      CHECK(diff > 1e-6);
    } else {
      CHECK(diff == 0.0);
    }
  }
}

TEST_CASE("construction and forward are deterministic") {
  const auto x = random_input<float>(1, 3, 32, 32, 10);
  JsdmNet<float> a(small_jsdm(), 42), b(small_jsdm(), 42), c(small_jsdm(), 43);
  const auto oa = a.forward(x, losses::BranchSet::all(), Mode::Eval);
  const auto ob = b.forward(x, losses::BranchSet::all(), Mode::Eval);
  const auto oc = c.forward(x, losses::BranchSet::all(), Mode::Eval);
  CHECK(same(oa.seg.values(), ob.seg.values()));
  CHECK_FALSE(same(oa.seg.values(), oc.seg.values()));
}

TEST_CASE("disabled branches own no parameters") {
  auto spec = small_jsdm();
  spec.enabled = {losses::Branch::Predictor, losses::Branch::Segmentor};
  JsdmNet<float> net(spec, 1);
  for (const auto* p : net.params()) CHECK(p->name.rfind("detector.", 0) != 0);
  const auto o = net.forward(random_input<float>(1, 3, 32, 32, 1), losses::BranchSet::all(),
                             Mode::Eval);
  CHECK(o.heatmap.empty());
}

TEST_CASE("fine networks") {
  FsmSpec fs_spec;
  fs_spec.encoder = {4, 3, 4};
  fs_spec.decoder = {8};
  fs_spec.input_size = 32;
  FsmNet<float> fsm(fs_spec, 1);
  CHECK(fsm.forward(random_input<float>(2, 4, 32, 32, 1), Mode::Eval).shape() ==
        Shape{2, 3, 32, 32});

  FlmSpec fl_spec;
  fl_spec.encoder = {6, 3, 4};
  fl_spec.decoder = {8};
  fl_spec.hidden = 8;
  fl_spec.input_size = 32;
  FlmNet<float> flm(fl_spec, 1);
  const auto o = flm.forward(random_input<float>(2, 6, 32, 32, 2), Mode::Eval);
  CHECK(o.coords.shape() == Shape{2, 2, 1, 1});
  CHECK(o.heatmap.shape() == Shape{2, 1, 32, 32});
  for (float v : o.coords.values()) CHECK((v > 0.0f && v < 1.0f));
}

TEST_CASE("adam moves parameters against the gradient") {
  Param<double> p{"w", BasicTensor<double>(1, 1, 1, 2, 1.0), BasicTensor<double>(1, 1, 1, 2)};
  p.grad.values()[0] = 1.0;
  p.grad.values()[1] = -1.0;
  Adam<double> adam({&p}, 0.1);
  adam.step();
  CHECK(p.value.values()[0] == doctest::Approx(0.9));
  CHECK(p.value.values()[1] == doctest::Approx(1.1));
  CHECK(adam.steps() == 1);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = scratch("roundtrip");
  JsdmNet<float> net(small_jsdm(), 11);
  const auto x = random_input<float>(1, 3, 32, 32, 12);
  // One training pass so running statistics differ from their defaults.
  net.forward(x, losses::BranchSet::all(), Mode::Train);
  save(dir, net);
  CHECK(fs::exists(dir / "graph.json"));

  auto loaded = load_jsdm(dir);
  const auto a = net.forward(x, losses::BranchSet::all(), Mode::Eval);
  const auto b = loaded->forward(x, losses::BranchSet::all(), Mode::Eval);
  CHECK(same(a.distance.values(), b.distance.values()));
  CHECK(same(a.heatmap.values(), b.heatmap.values()));
  CHECK(same(a.seg.values(), b.seg.values()));

  CHECK_THROWS_AS(load_fsm(dir), InputError);
  CHECK_THROWS_AS(load_jsdm(scratch("missing")), InputError);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint shape mismatch names the tensor") {
  const auto dir = scratch("mismatch");
  JsdmNet<float> narrow(small_jsdm(4), 1);
  save(dir, narrow);
  JsdmNet<float> wide(small_jsdm(8), 1);
  try {
    load_state(dir, wide.state());
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("encoder.") != std::string::npos);
  }
  // Encoder-only loading rejects mismatched shapes too.
  CHECK_THROWS_AS(load_encoder_weights(dir, wide.state()), InputError);
  JsdmNet<float> narrow_again(small_jsdm(4), 2);
  CHECK(load_encoder_weights(dir, narrow_again.state()) > 0);
  fs::remove_all(dir);
}
