#include "joined/nn/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace joined::nn {

using losses::Branch;
using losses::BranchSet;

namespace {
// sigmoid(-4.6) ~ 0.01
constexpr double kSparseHeadBias = -4.6;

// Channel order is (OC, OD rim, background); foreground starts near 0.01.
template <typename T>
void init_seg_prior(Conv2d<T>& head, SegActivation act) {
  auto& b = head.bias().value;
  if (act == SegActivation::Softmax) {
    b.values()[0] = T(0);
    b.values()[1] = T(0);
    b.values()[2] = T(-kSparseHeadBias);
  } else {
    b.values()[0] = T(kSparseHeadBias);
    b.values()[1] = T(kSparseHeadBias);
    b.values()[2] = T(-kSparseHeadBias);
  }
}
}  // namespace

void EncoderSpec::validate() const {
  if (depth < 3) throw ConfigError("encoder depth must be >= 3, got " + std::to_string(depth));
  if (base_width < 1) throw ConfigError("encoder base_width must be positive");
  if (in_channels < 1) throw ConfigError("encoder in_channels must be positive");
}

void DecoderSpec::validate() const {
  if (start_width < 1) throw ConfigError("decoder start_width must be positive");
}

const char* to_string(SegActivation a) {
  return a == SegActivation::Sigmoid ? "sigmoid" : "softmax";
}

SegActivation seg_activation_from_string(const std::string& s) {
  if (s == "sigmoid") return SegActivation::Sigmoid;
  if (s == "softmax") return SegActivation::Softmax;
  throw ConfigError("seg_activation must be 'sigmoid' or 'softmax', got '" + s + "'");
}

void require_divisible(const EncoderSpec& enc, int h, int w, const char* what) {
  const int d = enc.divisor();
  if (h <= 0 || w <= 0 || h % d != 0 || w % d != 0) {
    throw ConfigError(std::string(what) + ": spatial size " + std::to_string(h) + "x" +
                      std::to_string(w) + " is not divisible by " + std::to_string(d) +
                      " (encoder depth " + std::to_string(enc.depth) + ")");
  }
}

void JsdmSpec::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.in_channels != 3) throw ConfigError("jsdm input must have 3 channels");
  if (enabled.empty()) throw ConfigError("jsdm: at least one branch must be enabled");
  require_divisible(encoder, input_size, input_size, "coarse.resolution");
}

void FsmSpec::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.in_channels != 4) throw ConfigError("fsm input must have 4 channels");
  require_divisible(encoder, input_size, input_size, "fine_seg.crop_size");
}

void FlmSpec::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.in_channels != 6) throw ConfigError("flm input must have 6 channels");
  if (hidden < 1) throw ConfigError("fine_loc.hidden must be positive");
  require_divisible(encoder, input_size, input_size, "fine_loc.crop_size");
}

// ---------------------------------------------------------------------------

template <typename T>
Encoder<T>::Encoder(const EncoderSpec& spec, const std::string& prefix) : spec_(spec) {
  spec_.validate();
  convs_.reserve(2 * spec.depth);
  int in = spec.in_channels;
  for (int b = 0; b < spec.depth; ++b) {
    const std::string name = prefix + ".block" + std::to_string(b);
    convs_.emplace_back(name + ".0", in, spec.width(b));
    convs_.emplace_back(name + ".1", spec.width(b), spec.width(b));
    in = spec.width(b);
  }
  pools_.resize(spec.depth - 1);
}

template <typename T>
void Encoder<T>::init(Rng& rng) {
  for (auto& c : convs_) c.init(rng);
}

template <typename T>
void Encoder<T>::collect(ParamRegistry<T>& reg) {
  for (auto& c : convs_) c.collect(reg);
}

template <typename T>
std::vector<BasicTensor<T>> Encoder<T>::forward(const BasicTensor<T>& x, Mode mode) {
  require_divisible(spec_, x.h(), x.w(), "encoder input");
  std::vector<BasicTensor<T>> feats;
  feats.reserve(spec_.depth);
  BasicTensor<T> cur = x;
  for (int b = 0; b < spec_.depth; ++b) {
    if (b > 0) cur = pools_[b - 1].forward(feats.back());
    cur = convs_[2 * b].forward(cur, mode);
    feats.push_back(convs_[2 * b + 1].forward(cur, mode));
  }
  return feats;
}

template <typename T>
BasicTensor<T> Encoder<T>::backward(std::vector<BasicTensor<T>>& dfeat) {
  BasicTensor<T> carry;
  for (int b = spec_.depth - 1; b >= 0; --b) {
    accumulate(carry, dfeat[b]);
    if (carry.empty()) continue;
    carry = convs_[2 * b].backward(convs_[2 * b + 1].backward(carry));
    if (b > 0) carry = pools_[b - 1].backward(carry);
  }
  return carry;
}

// ---------------------------------------------------------------------------

template <typename T>
Decoder<T>::Decoder(const EncoderSpec& enc, const DecoderSpec& dec, const std::string& prefix)
    : stages_(enc.depth - 1) {
  dec.validate();
  convs_.reserve(2 * stages_);
  int prev = enc.width(enc.depth - 1);
  for (int k = 0; k < stages_; ++k) {
    const int skip = enc.width(enc.depth - 2 - k);
    const int width = dec.width(k);
    const std::string name = prefix + ".stage" + std::to_string(k);
    up_channels_.push_back(prev);
    convs_.emplace_back(name + ".0", prev + skip, width);
    convs_.emplace_back(name + ".1", width, width);
    prev = width;
  }
  out_width_ = prev;
}

template <typename T>
void Decoder<T>::init(Rng& rng) {
  for (auto& c : convs_) c.init(rng);
}

template <typename T>
void Decoder<T>::collect(ParamRegistry<T>& reg) {
  for (auto& c : convs_) c.collect(reg);
}

template <typename T>
BasicTensor<T> Decoder<T>::forward(const std::vector<BasicTensor<T>>& features, Mode mode) {
  BasicTensor<T> cur = features.back();
  for (int k = 0; k < stages_; ++k) {
    cur = concat_channels(upsample2(cur), features[features.size() - 2 - k]);
    cur = convs_[2 * k].forward(cur, mode);
    cur = convs_[2 * k + 1].forward(cur, mode);
  }
  return cur;
}

template <typename T>
void Decoder<T>::backward(const BasicTensor<T>& dout, std::vector<BasicTensor<T>>& dfeatures) {
  BasicTensor<T> g = dout;
  for (int k = stages_ - 1; k >= 0; --k) {
    g = convs_[2 * k].backward(convs_[2 * k + 1].backward(g));
    auto [dup, dskip] = split_channels(g, up_channels_[k]);
    accumulate(dfeatures[dfeatures.size() - 2 - k], dskip);
    g = upsample2_backward(dup);
  }
  accumulate(dfeatures.back(), g);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void zero_all(const std::vector<Param<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace

template <typename T>
JsdmNet<T>::JsdmNet(const JsdmSpec& spec, std::uint64_t seed)
    : spec_(spec),
      encoder_(spec.encoder, "encoder"),
      predictor_(spec.encoder, spec.decoder, "predictor"),
      detector_(spec.encoder, spec.decoder, "detector"),
      segmentor_(spec.encoder, spec.decoder, "segmentor"),
      predictor_head_("predictor.head", predictor_.out_width(), 1, 1),
      detector_head_("detector.head",
                     detector_.out_width() +
                         (spec.bridge && spec.enabled.contains(Branch::Predictor)
                              ? predictor_.out_width()
                              : 0),
                     2, 1),
      segmentor_head_("segmentor.head", segmentor_.out_width(), 3, 1) {
  spec_.validate();
  Rng rng(seed);
  encoder_.init(rng);
  encoder_.collect(registry_);
  if (spec.enabled.contains(Branch::Predictor)) {
    predictor_.init(rng);
    predictor_head_.init(rng);
    predictor_.collect(registry_);
    predictor_head_.collect(registry_);
  }
  if (spec.enabled.contains(Branch::Detector)) {
    detector_.init(rng);
    detector_head_.init(rng);
    // Heatmaps are mostly zero: start the logits near the background prior.
    detector_head_.bias().value.fill(T(kSparseHeadBias));
    detector_.collect(registry_);
    detector_head_.collect(registry_);
  }
  if (spec.enabled.contains(Branch::Segmentor)) {
    segmentor_.init(rng);
    segmentor_head_.init(rng);
    init_seg_prior(segmentor_head_, spec.seg_activation);
    segmentor_.collect(registry_);
    segmentor_head_.collect(registry_);
  }
}

template <typename T>
void JsdmNet<T>::zero_grad() {
  zero_all(registry_.params);
}

template <typename T>
JsdmOutputs<T> JsdmNet<T>::forward(const BasicTensor<T>& x, BranchSet active, Mode mode) {
  if (x.c() != 3) throw std::invalid_argument("JsdmNet: expected 3 input channels");
  active = active.intersect(spec_.enabled);
  input_shape_ = x.shape();
  ran_d_ = active.contains(Branch::Detector);
  used_bridge_ = ran_d_ && spec_.bridge && spec_.enabled.contains(Branch::Predictor);
  ran_p_ = active.contains(Branch::Predictor) || used_bridge_;
  ran_s_ = active.contains(Branch::Segmentor);

  const auto feats = encoder_.forward(x, mode);
  JsdmOutputs<T> out;
  BasicTensor<T> pred_feat;
  if (ran_p_) {
    pred_feat = predictor_.forward(feats, mode);
    out.distance = predictor_act_.forward(predictor_head_.forward(pred_feat));
  }
  if (ran_d_) {
    BasicTensor<T> det_feat = detector_.forward(feats, mode);
    if (used_bridge_) det_feat = concat_channels(det_feat, pred_feat);
    out.heatmap = detector_act_.forward(detector_head_.forward(det_feat));
  }
  if (ran_s_) {
    auto logits = segmentor_head_.forward(segmentor_.forward(feats, mode));
    out.seg = spec_.seg_activation == SegActivation::Softmax ? seg_softmax_.forward(logits)
                                                             : seg_sigmoid_.forward(logits);
  }
  return out;
}

template <typename T>
void JsdmNet<T>::backward(const JsdmOutputs<T>& grads) {
  std::vector<BasicTensor<T>> dfeat(spec_.encoder.depth);
  BasicTensor<T> dpred_feat;
  if (ran_d_ && !grads.heatmap.empty()) {
    auto dfeat_head = detector_head_.backward(detector_act_.backward(grads.heatmap));
    if (used_bridge_) {
      auto [ddet, dpred] = split_channels(dfeat_head, detector_.out_width());
      dfeat_head = std::move(ddet);
      dpred_feat = std::move(dpred);
    }
    detector_.backward(dfeat_head, dfeat);
  }
  if (ran_p_) {
    if (!grads.distance.empty()) {
      accumulate(dpred_feat, predictor_head_.backward(predictor_act_.backward(grads.distance)));
    }
    if (!dpred_feat.empty()) predictor_.backward(dpred_feat, dfeat);
  }
  if (ran_s_ && !grads.seg.empty()) {
    auto dlogits = spec_.seg_activation == SegActivation::Softmax
                       ? seg_softmax_.backward(grads.seg)
                       : seg_sigmoid_.backward(grads.seg);
    segmentor_.backward(segmentor_head_.backward(dlogits), dfeat);
  }
  encoder_.backward(dfeat);
}

// ---------------------------------------------------------------------------

template <typename T>
FsmNet<T>::FsmNet(const FsmSpec& spec, std::uint64_t seed)
    : spec_(spec),
      encoder_(spec.encoder, "encoder"),
      decoder_(spec.encoder, spec.decoder, "decoder"),
      head_("decoder.head", decoder_.out_width(), 3, 1) {
  spec_.validate();
  Rng rng(seed);
  encoder_.init(rng);
  decoder_.init(rng);
  head_.init(rng);
  init_seg_prior(head_, spec.seg_activation);
  encoder_.collect(registry_);
  decoder_.collect(registry_);
  head_.collect(registry_);
}

template <typename T>
void FsmNet<T>::zero_grad() {
  zero_all(registry_.params);
}

template <typename T>
BasicTensor<T> FsmNet<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (x.c() != 4) {
    throw std::invalid_argument("FsmNet: expected 4 input channels, got " + std::to_string(x.c()));
  }
  auto logits = head_.forward(decoder_.forward(encoder_.forward(x, mode), mode));
  return spec_.seg_activation == SegActivation::Softmax ? softmax_.forward(logits)
                                                        : sigmoid_.forward(logits);
}

template <typename T>
void FsmNet<T>::backward(const BasicTensor<T>& dseg) {
  auto dlogits = spec_.seg_activation == SegActivation::Softmax ? softmax_.backward(dseg)
                                                                : sigmoid_.backward(dseg);
  std::vector<BasicTensor<T>> dfeat(spec_.encoder.depth);
  decoder_.backward(head_.backward(dlogits), dfeat);
  encoder_.backward(dfeat);
}

// ---------------------------------------------------------------------------

template <typename T>
FlmNet<T>::FlmNet(const FlmSpec& spec, std::uint64_t seed)
    : spec_(spec),
      encoder_(spec.encoder, "encoder"),
      decoder_(spec.encoder, spec.decoder, "decoder"),
      head_("decoder.head", decoder_.out_width(), 1, 1),
      fc1_("regression.fc1", spec.encoder.width(spec.encoder.depth - 1), spec.hidden),
      fc2_("regression.fc2", spec.hidden, 2) {
  spec_.validate();
  Rng rng(seed);
  encoder_.init(rng);
  decoder_.init(rng);
  head_.init(rng);
  head_.bias().value.fill(T(kSparseHeadBias));
  fc1_.init(rng);
  fc2_.init(rng);
  encoder_.collect(registry_);
  decoder_.collect(registry_);
  head_.collect(registry_);
  fc1_.collect(registry_);
  fc2_.collect(registry_);
}

template <typename T>
void FlmNet<T>::zero_grad() {
  zero_all(registry_.params);
}

template <typename T>
FlmOutputs<T> FlmNet<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (x.c() != 6) {
    throw std::invalid_argument("FlmNet: expected 6 input channels, got " + std::to_string(x.c()));
  }
  const auto feats = encoder_.forward(x, mode);
  FlmOutputs<T> out;
  out.heatmap = heat_act_.forward(head_.forward(decoder_.forward(feats, mode)));
  deepest_shape_ = feats.back().shape();
  out.coords =
      coord_act_.forward(fc2_.forward(fc_relu_.forward(fc1_.forward(global_avg_pool(feats.back())))));
  return out;
}

template <typename T>
void FlmNet<T>::backward(const FlmOutputs<T>& grads) {
  std::vector<BasicTensor<T>> dfeat(spec_.encoder.depth);
  if (!grads.heatmap.empty()) {
    decoder_.backward(head_.backward(heat_act_.backward(grads.heatmap)), dfeat);
  }
  if (!grads.coords.empty()) {
    auto g = fc1_.backward(fc_relu_.backward(fc2_.backward(coord_act_.backward(grads.coords))));
    accumulate(dfeat.back(), global_avg_pool_backward(g, deepest_shape_));
  }
  encoder_.backward(dfeat);
}

// ---------------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(std::vector<Param<T>*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    T* w = params_[k]->value.data();
    const T* g = params_[k]->grad.data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1 - beta2_) * static_cast<double>(g[i]) * g[i];
      w[i] -= static_cast<T>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
    }
  }
}

template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template class JsdmNet<float>;
template class JsdmNet<double>;
template class FsmNet<float>;
template class FsmNet<double>;
template class FlmNet<float>;
template class FlmNet<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace joined::nn
