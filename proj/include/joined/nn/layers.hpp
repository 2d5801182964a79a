#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "joined/tensor.hpp"

namespace joined::nn {

enum class Mode {
  Train,  // batch statistics, running statistics updated
  Eval,   // fixed running statistics
};

template <typename T>
struct Param {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  void zero_grad() { grad.fill(T(0)); }
};

/// Any persistent tensor (parameter or buffer), addressed by layer path.
template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T>* tensor = nullptr;
};

template <typename T>
struct ParamRegistry {
  std::vector<Param<T>*> params;
  std::vector<NamedTensor<T>> state;

  void add(Param<T>& p) {
    params.push_back(&p);
    state.push_back({p.name, &p.value});
  }
  void add_buffer(const std::string& name, BasicTensor<T>& t) { state.push_back({name, &t}); }
};

using Rng = std::mt19937_64;

/// Accumulates `g` into `acc`, adopting its shape when `acc` is empty.
template <typename T>
void accumulate(BasicTensor<T>& acc, const BasicTensor<T>& g);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Splits channels [0, first) and [first, C).
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& x, int first);

/// 2-D convolution, stride 1, "same" zero padding, odd square kernel.
template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, bool bias = true);

  void init(Rng& rng);
  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> backward(const BasicTensor<T>& dy);
  void collect(ParamRegistry<T>& reg);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  void im2col(const T* src, int h, int w);
  void col2im(T* dst, int h, int w) const;

  int in_, out_, k_, pad_;
  bool has_bias_;
  Param<T> weight_;  // (out, in, k, k)
  Param<T> bias_;    // (1, out, 1, 1)
  BasicTensor<T> input_;
  std::vector<T> col_;
};

/// Per-channel normalization over (N, H, W) with learnable affine.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
  BasicTensor<T> backward(const BasicTensor<T>& dy);
  void collect(ParamRegistry<T>& reg);

 private:
  std::string name_;
  int channels_;
  double momentum_, eps_;
  Param<T> gamma_, beta_;
  BasicTensor<T> running_mean_, running_var_;
  Mode last_mode_ = Mode::Train;
  BasicTensor<T> xhat_;
  std::vector<double> inv_std_;
};

template <typename T>
class ReLU {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> backward(const BasicTensor<T>& dy) const;

 private:
  BasicTensor<T> output_;
};

/// conv3x3 -> norm -> relu.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu(const std::string& name, int in_channels, int out_channels);

  void init(Rng& rng) { conv_.init(rng); }
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
  BasicTensor<T> backward(const BasicTensor<T>& dy);
  void collect(ParamRegistry<T>& reg);

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> norm_;
  ReLU<T> relu_;
};

/// 2x2 max pooling, stride 2.
template <typename T>
class MaxPool2 {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> backward(const BasicTensor<T>& dy) const;

 private:
  Shape in_shape_;
  std::vector<std::uint32_t> argmax_;
};

/// Nearest-neighbour upsampling by 2.
template <typename T>
BasicTensor<T> upsample2(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& dy);

template <typename T>
class Sigmoid {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> backward(const BasicTensor<T>& dy) const;

 private:
  BasicTensor<T> output_;
};

/// Softmax across channels at every pixel.
template <typename T>
class ChannelSoftmax {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> backward(const BasicTensor<T>& dy) const;

 private:
  BasicTensor<T> output_;
};

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& dy, const Shape& in_shape);

/// Fully connected layer on (N, C, 1, 1).
template <typename T>
class Linear {
 public:
  Linear(std::string name, int in_features, int out_features);

  void init(Rng& rng);
  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> backward(const BasicTensor<T>& dy);
  void collect(ParamRegistry<T>& reg);

 private:
  int in_, out_;
  Param<T> weight_;  // (1, 1, out, in)
  Param<T> bias_;    // (1, out, 1, 1)
  BasicTensor<T> input_;
};

}  // namespace joined::nn
