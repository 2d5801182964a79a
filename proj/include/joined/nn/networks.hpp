#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "joined/losses.hpp"
#include "joined/nn/layers.hpp"

namespace joined::nn {

/// Convolutional encoder: `depth` blocks of two conv-norm-relu layers, block i
/// having base_width * 2^i channels, with 2x2 max pooling between blocks.
struct EncoderSpec {
  int in_channels = 3;
  int depth = 5;
  int base_width = 32;

  int width(int block) const { return base_width << block; }
  /// Spatial extents must be divisible by this.
  int divisor() const { return 1 << (depth - 1); }
  void validate() const;
};

/// Decoder widths start at `start_width` and halve after each upsampling stage.
struct DecoderSpec {
  int start_width = 256;

  int width(int stage) const { return std::max(1, start_width >> stage); }
  void validate() const;
};

enum class SegActivation { Sigmoid, Softmax };

const char* to_string(SegActivation a);
SegActivation seg_activation_from_string(const std::string& s);

struct JsdmSpec {
  EncoderSpec encoder{3, 5, 32};
  DecoderSpec decoder{256};
  /// Predictor penultimate features feed the Detector head.
  bool bridge = true;
  SegActivation seg_activation = SegActivation::Sigmoid;
  losses::BranchSet enabled = losses::BranchSet::all();
  int input_size = 256;

  void validate() const;
};

struct FsmSpec {
  EncoderSpec encoder{4, 5, 32};
  DecoderSpec decoder{256};
  SegActivation seg_activation = SegActivation::Sigmoid;
  int input_size = 448;

  void validate() const;
};

struct FlmSpec {
  EncoderSpec encoder{6, 5, 32};
  DecoderSpec decoder{256};
  int hidden = 64;
  int input_size = 128;

  void validate() const;
};

/// Throws ConfigError unless both extents are positive multiples of the
/// encoder divisor.
void require_divisible(const EncoderSpec& enc, int h, int w, const char* what);

template <typename T>
class Encoder {
 public:
  Encoder(const EncoderSpec& spec, const std::string& prefix);

  void init(Rng& rng);
  /// Features of every block before pooling; index 0 is full resolution.
  std::vector<BasicTensor<T>> forward(const BasicTensor<T>& x, Mode mode);
  /// `dfeatures[i]` may be empty when block i received no gradient.
  BasicTensor<T> backward(std::vector<BasicTensor<T>>& dfeatures);
  void collect(ParamRegistry<T>& reg);
  const EncoderSpec& spec() const { return spec_; }

 private:
  EncoderSpec spec_;
  std::vector<ConvBnRelu<T>> convs_;  // 2 per block
  std::vector<MaxPool2<T>> pools_;
};

/// Upsample / skip-concat / two conv-norm-relu stages back to full resolution.
/// Produces the penultimate feature map; heads are owned by the networks.
template <typename T>
class Decoder {
 public:
  Decoder(const EncoderSpec& enc, const DecoderSpec& dec, const std::string& prefix);

  void init(Rng& rng);
  BasicTensor<T> forward(const std::vector<BasicTensor<T>>& features, Mode mode);
  /// Accumulates encoder feature gradients into `dfeatures`.
  void backward(const BasicTensor<T>& dout, std::vector<BasicTensor<T>>& dfeatures);
  void collect(ParamRegistry<T>& reg);
  int out_width() const { return out_width_; }

 private:
  int stages_;
  int out_width_;
  std::vector<int> up_channels_;
  std::vector<ConvBnRelu<T>> convs_;  // 2 per stage
};

template <typename T>
struct JsdmOutputs {
  BasicTensor<T> distance;  // (N,1,H,W) in [0,1]
  BasicTensor<T> heatmap;   // (N,2,H,W) in [0,1]
  BasicTensor<T> seg;       // (N,3,H,W): OC, OD, background
};

/// Shared encoder with Predictor, Detector and Segmentor decoders.
template <typename T>
class JsdmNet {
 public:
  JsdmNet(const JsdmSpec& spec, std::uint64_t seed);
  JsdmNet(const JsdmNet&) = delete;
  JsdmNet& operator=(const JsdmNet&) = delete;

  /// Evaluates the decoders in `active` (restricted to enabled branches). The
  /// Predictor also runs when only the Detector needs it through the bridge.
  JsdmOutputs<T> forward(const BasicTensor<T>& x, losses::BranchSet active, Mode mode);
  /// Gradients with respect to the activated outputs; empty tensors mean none.
  void backward(const JsdmOutputs<T>& grads);

  void zero_grad();
  const std::vector<Param<T>*>& params() const { return registry_.params; }
  const std::vector<NamedTensor<T>>& state() const { return registry_.state; }
  const JsdmSpec& spec() const { return spec_; }

 private:
  JsdmSpec spec_;
  Encoder<T> encoder_;
  Decoder<T> predictor_, detector_, segmentor_;
  Conv2d<T> predictor_head_, detector_head_, segmentor_head_;
  Sigmoid<T> predictor_act_, detector_act_, seg_sigmoid_;
  ChannelSoftmax<T> seg_softmax_;
  ParamRegistry<T> registry_;

  // forward bookkeeping
  bool ran_p_ = false, ran_d_ = false, ran_s_ = false, used_bridge_ = false;
  Shape input_shape_;
};

/// Encoder-decoder segmenter on RGB + coarse mask (4 channels).
template <typename T>
class FsmNet {
 public:
  FsmNet(const FsmSpec& spec, std::uint64_t seed);
  FsmNet(const FsmNet&) = delete;
  FsmNet& operator=(const FsmNet&) = delete;

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
  void backward(const BasicTensor<T>& dseg);

  void zero_grad();
  const std::vector<Param<T>*>& params() const { return registry_.params; }
  const std::vector<NamedTensor<T>>& state() const { return registry_.state; }
  const FsmSpec& spec() const { return spec_; }

 private:
  FsmSpec spec_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
  Conv2d<T> head_;
  Sigmoid<T> sigmoid_;
  ChannelSoftmax<T> softmax_;
  ParamRegistry<T> registry_;
};

template <typename T>
struct FlmOutputs {
  BasicTensor<T> coords;   // (N,2,1,1) in [0,1]: x, y normalized to the crop
  BasicTensor<T> heatmap;  // (N,1,H,W) in [0,1]
};

/// Crop localizer on RGB + distance map + 2 heatmap channels (6 channels)
/// with a pooled regression head and a heatmap decoder.
template <typename T>
class FlmNet {
 public:
  FlmNet(const FlmSpec& spec, std::uint64_t seed);
  FlmNet(const FlmNet&) = delete;
  FlmNet& operator=(const FlmNet&) = delete;

  FlmOutputs<T> forward(const BasicTensor<T>& x, Mode mode);
  void backward(const FlmOutputs<T>& grads);

  void zero_grad();
  const std::vector<Param<T>*>& params() const { return registry_.params; }
  const std::vector<NamedTensor<T>>& state() const { return registry_.state; }
  const FlmSpec& spec() const { return spec_; }

 private:
  FlmSpec spec_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
  Conv2d<T> head_;
  Sigmoid<T> heat_act_;
  Linear<T> fc1_, fc2_;
  ReLU<T> fc_relu_;
  Sigmoid<T> coord_act_;
  ParamRegistry<T> registry_;
  Shape deepest_shape_;
  std::size_t depth_ = 0;
};

/// Adaptive-moment optimizer.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, double lr = 2e-4, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step();
  double lr() const { return lr_; }
  long steps() const { return t_; }

 private:
  std::vector<Param<T>*> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace joined::nn
