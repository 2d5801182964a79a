#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "joined/tensor.hpp"
#include "joined/types.hpp"

namespace joined::losses {

inline constexpr double kDiceEps = 1e-6;

namespace detail {
inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": size mismatch " + std::to_string(a) +
                                " vs " + std::to_string(b));
  }
}
}  // namespace detail

/// Mean of squared differences.
template <std::floating_point T>
double mse(std::span<const T> a, std::span<const T> b) {
  detail::require_same_length(a.size(), b.size(), "mse");
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// Adds scale * d mse(target, pred) / d pred into `grad`.
template <std::floating_point T>
void mse_grad(std::span<const T> target, std::span<const T> pred, std::span<T> grad,
              double scale = 1.0) {
  detail::require_same_length(target.size(), pred.size(), "mse_grad");
  detail::require_same_length(pred.size(), grad.size(), "mse_grad");
  if (pred.empty()) return;
  const double k = 2.0 * scale / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    grad[i] += static_cast<T>(k * (static_cast<double>(pred[i]) - static_cast<double>(target[i])));
  }
}

/// Soft Dice loss 1 - 2Σmp / (Σ(m+p) + eps) on a single channel.
template <std::floating_point T>
double dice_loss(std::span<const T> m, std::span<const T> p, double eps = kDiceEps) {
  detail::require_same_length(m.size(), p.size(), "dice_loss");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    inter += static_cast<double>(m[i]) * p[i];
    total += static_cast<double>(m[i]) + p[i];
  }
  return 1.0 - 2.0 * inter / (total + eps);
}

/// Adds scale * d dice_loss(m, p) / d p into `grad`.
template <std::floating_point T>
void dice_loss_grad(std::span<const T> m, std::span<const T> p, std::span<T> grad,
                    double eps = kDiceEps, double scale = 1.0) {
  detail::require_same_length(m.size(), p.size(), "dice_loss_grad");
  detail::require_same_length(p.size(), grad.size(), "dice_loss_grad");
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    inter += static_cast<double>(m[i]) * p[i];
    total += static_cast<double>(m[i]) + p[i];
  }
  const double denom = total + eps;
  const double k = -2.0 * scale / (denom * denom);
  for (std::size_t i = 0; i < p.size(); ++i) {
    grad[i] += static_cast<T>(k * (static_cast<double>(m[i]) * denom - inter));
  }
}

/// Tensor mse over every element. When `grad` is given, scale * d/d pred is
/// accumulated into it.
template <std::floating_point T>
double mse(const BasicTensor<T>& target, const BasicTensor<T>& pred,
           BasicTensor<T>* grad = nullptr, double scale = 1.0) {
  require_same_shape(target.shape(), pred.shape(), "mse");
  if (grad) mse_grad(target.values(), pred.values(), grad->values(), scale);
  return mse(target.values(), pred.values());
}

/// Dice loss averaged over every (sample, channel) plane.
template <std::floating_point T>
double dice_loss(const BasicTensor<T>& m, const BasicTensor<T>& p, double eps = kDiceEps,
                 BasicTensor<T>* grad = nullptr, double scale = 1.0) {
  require_same_shape(m.shape(), p.shape(), "dice_loss");
  const int planes = m.n() * m.c();
  if (planes == 0) return 0.0;
  double acc = 0.0;
  for (int n = 0; n < m.n(); ++n) {
    for (int c = 0; c < m.c(); ++c) {
      acc += dice_loss(m.plane(n, c), p.plane(n, c), eps);
      if (grad) dice_loss_grad(m.plane(n, c), p.plane(n, c), grad->plane(n, c), eps,
                               scale / planes);
    }
  }
  return acc / planes;
}

// ---------------------------------------------------------------------------
// Progressive schedule

enum class Branch { Predictor = 0, Detector = 1, Segmentor = 2 };

/// Small set over {P, D, S}.
class BranchSet {
 public:
  constexpr BranchSet() = default;
  constexpr BranchSet(std::initializer_list<Branch> bs) {
    for (Branch b : bs) insert(b);
  }
  static constexpr BranchSet all() {
    return {Branch::Predictor, Branch::Detector, Branch::Segmentor};
  }
  constexpr void insert(Branch b) { bits_ |= 1u << static_cast<unsigned>(b); }
  constexpr bool contains(Branch b) const { return bits_ & (1u << static_cast<unsigned>(b)); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr BranchSet intersect(BranchSet o) const {
    BranchSet s;
    s.bits_ = bits_ & o.bits_;
    return s;
  }
  std::string str() const;
  friend constexpr bool operator==(BranchSet, BranchSet) = default;

 private:
  unsigned bits_ = 0;
};

struct LossWeights {
  double lambda0 = 1.0;
  double lambda1 = 1.0;
  int tau0 = 50;
  int tau1 = 100;

  void validate() const;
};

/// Active terms for an epoch (1-based) with every branch enabled:
/// epoch <= tau0 -> {P}; tau0 < epoch <= tau1 -> {P,D}; otherwise {P,D,S}.
BranchSet jsdm_schedule(int epoch, const LossWeights& w);

/// Schedule for a model with some branches ablated. Each enabled branch keeps
/// its own start epoch (P: 1, D: tau0+1, S: tau1+1) except that the earliest
/// enabled branch always starts at epoch 1.
BranchSet jsdm_schedule(int epoch, const LossWeights& w, BranchSet enabled);

/// First epoch at which `b` is active under `jsdm_schedule(.., enabled)`.
int activation_epoch(Branch b, const LossWeights& w, BranchSet enabled);

struct JsdmLossReport {
  double l_p = 0.0;
  double l_d = 0.0;
  double l_s = 0.0;
  double total = 0.0;
  BranchSet active;
};

/// Combines branch terms with the schedule weights; inactive terms are zeroed.
JsdmLossReport combine(double l_p, double l_d, double l_s, BranchSet active,
                       const LossWeights& w);

// ---------------------------------------------------------------------------
// Branch objectives

/// Landmark coordinates in normalized units, ordered (OD, fovea).
struct CoordinatePair {
  Coordinate od;
  Coordinate fovea;
  std::array<double, 4> flat() const { return {od.x, od.y, fovea.x, fovea.y}; }
};

/// x / (W-1), y / (H-1).
Coordinate normalize(Coordinate c, int h, int w);
Coordinate denormalize(Coordinate c, int h, int w);

double coordinate_mse(const CoordinatePair& a, const CoordinatePair& b);
double coordinate_mse(Coordinate a, Coordinate b);

/// Distance-map loss over a batch: mean of per-sample MSE over the samples
/// flagged `supervised`. Unsupervised samples contribute nothing.
template <std::floating_point T>
double loss_p(const BasicTensor<T>& gt, const BasicTensor<T>& pred,
              const std::vector<bool>& supervised, BasicTensor<T>* grad = nullptr,
              double scale = 1.0) {
  require_same_shape(gt.shape(), pred.shape(), "loss_p");
  if (supervised.size() != static_cast<std::size_t>(gt.n())) {
    throw std::invalid_argument("loss_p: supervised flags do not match batch size");
  }
  int count = 0;
  for (bool s : supervised) count += s ? 1 : 0;
  if (count == 0) return 0.0;
  double acc = 0.0;
  for (int n = 0; n < gt.n(); ++n) {
    if (!supervised[n]) continue;
    acc += mse(gt.sample(n), pred.sample(n));
    if (grad) mse_grad(gt.sample(n), pred.sample(n), grad->sample(n), scale / count);
  }
  return acc / count;
}

struct DetectionLossTerms {
  double heatmap_mse = 0.0;
  double coordinate_mse = 0.0;
  double dice = 0.0;
  double total() const { return heatmap_mse + coordinate_mse + dice; }
};

/// MSE(H, H_D) + MSE(c_P, c_D) + Dice(M_H, H_D). Coordinates are normalized.
/// Gradients (if requested) cover the heatmap terms; the coordinate term is
/// routed by the caller because its extraction is not differentiable.
template <std::floating_point T>
DetectionLossTerms loss_d(const BasicTensor<T>& h_gt, const BasicTensor<T>& h_pred,
                          const std::vector<CoordinatePair>& c_p,
                          const std::vector<CoordinatePair>& c_d,
                          const BasicTensor<T>& m_h, BasicTensor<T>* grad = nullptr,
                          double scale = 1.0) {
  require_same_shape(h_gt.shape(), h_pred.shape(), "loss_d");
  require_same_shape(m_h.shape(), h_pred.shape(), "loss_d mask");
  if (c_p.size() != c_d.size()) throw std::invalid_argument("loss_d: coordinate count mismatch");
  DetectionLossTerms t;
  t.heatmap_mse = mse(h_gt, h_pred, grad, scale);
  t.dice = dice_loss(m_h, h_pred, kDiceEps, grad, scale);
  if (!c_p.empty()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < c_p.size(); ++i) acc += coordinate_mse(c_p[i], c_d[i]);
    t.coordinate_mse = acc / static_cast<double>(c_p.size());
  }
  return t;
}

/// Mean per-channel Dice on a (OC, OD, background) one-hot target.
template <std::floating_point T>
double loss_s(const BasicTensor<T>& onehot, const BasicTensor<T>& p_s,
              BasicTensor<T>* grad = nullptr, double scale = 1.0) {
  require_same_shape(onehot.shape(), p_s.shape(), "loss_s");
  if (onehot.c() != 3) throw std::invalid_argument("loss_s: expected 3 channels");
  return dice_loss(onehot, p_s, kDiceEps, grad, scale);
}

/// MSE(c_gt, c_hat) + MSE(H_crop, H_FLM). Coordinates normalized to the crop.
template <std::floating_point T>
double loss_flm(Coordinate c_gt, Coordinate c_hat, const BasicTensor<T>& h_crop_gt,
                const BasicTensor<T>& h_flm) {
  require_same_shape(h_crop_gt.shape(), h_flm.shape(), "loss_flm");
  return coordinate_mse(c_gt, c_hat) + mse(h_crop_gt, h_flm);
}

}  // namespace joined::losses
