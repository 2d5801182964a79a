#include "joined/losses.hpp"

#include <algorithm>

namespace joined::losses {

std::string BranchSet::str() const {
  std::string s = "{";
  const char* names[] = {"P", "D", "S"};
  for (int b = 0; b < 3; ++b) {
    if (!contains(static_cast<Branch>(b))) continue;
    if (s.size() > 1) s += ",";
    s += names[b];
  }
  return s + "}";
}

void LossWeights::validate() const {
  if (!(tau0 < tau1)) {
    throw ConfigError("coarse.tau0 must be smaller than coarse.tau1 (got " +
                      std::to_string(tau0) + ", " + std::to_string(tau1) + ")");
  }
  if (tau0 < 0) throw ConfigError("coarse.tau0 must be non-negative");
  if (lambda0 < 0) throw ConfigError("coarse.lambda0 must be non-negative");
  if (lambda1 < 0) throw ConfigError("coarse.lambda1 must be non-negative");
}

BranchSet jsdm_schedule(int epoch, const LossWeights& w) {
  if (epoch <= w.tau0) return {Branch::Predictor};
  if (epoch <= w.tau1) return {Branch::Predictor, Branch::Detector};
  return BranchSet::all();
}

int activation_epoch(Branch b, const LossWeights& w, BranchSet enabled) {
  if (!enabled.contains(b)) return -1;
  for (int i = 0; i < static_cast<int>(b); ++i) {
    if (enabled.contains(static_cast<Branch>(i))) {
      return b == Branch::Detector ? w.tau0 + 1 : w.tau1 + 1;
    }
  }
  return 1;
}

BranchSet jsdm_schedule(int epoch, const LossWeights& w, BranchSet enabled) {
  BranchSet active;
  for (Branch b : {Branch::Predictor, Branch::Detector, Branch::Segmentor}) {
    const int start = activation_epoch(b, w, enabled);
    if (start > 0 && epoch >= start) active.insert(b);
  }
  return active;
}

JsdmLossReport combine(double l_p, double l_d, double l_s, BranchSet active,
                       const LossWeights& w) {
  JsdmLossReport r;
  r.active = active;
  r.l_p = active.contains(Branch::Predictor) ? l_p : 0.0;
  r.l_d = active.contains(Branch::Detector) ? l_d : 0.0;
  r.l_s = active.contains(Branch::Segmentor) ? l_s : 0.0;
  r.total = r.l_p + w.lambda0 * r.l_d + w.lambda1 * r.l_s;
  return r;
}

Coordinate normalize(Coordinate c, int h, int w) {
  return {w > 1 ? c.x / (w - 1) : 0.0, h > 1 ? c.y / (h - 1) : 0.0};
}

Coordinate denormalize(Coordinate c, int h, int w) {
  return {c.x * std::max(w - 1, 0), c.y * std::max(h - 1, 0)};
}

double coordinate_mse(const CoordinatePair& a, const CoordinatePair& b) {
  const auto fa = a.flat();
  const auto fb = b.flat();
  return mse<double>(fa, fb);
}

double coordinate_mse(Coordinate a, Coordinate b) {
  const std::array<double, 2> fa{a.x, a.y}, fb{b.x, b.y};
  return mse<double>(fa, fb);
}

}  // namespace joined::losses
