#include "joined/nn/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace joined::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void he_normal(BasicTensor<T>& t, int fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

}  // namespace

template <typename T>
void accumulate(BasicTensor<T>& acc, const BasicTensor<T>& g) {
  if (g.empty()) return;
  if (acc.empty()) {
    acc = g;
    return;
  }
  require_same_shape(acc.shape(), g.shape(), "accumulate");
  T* a = acc.data();
  const T* b = g.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw std::invalid_argument("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  }
  BasicTensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    auto dst = out.sample(n);
    auto sa = a.sample(n);
    auto sb = b.sample(n);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + sa.size());
  }
  return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& x, int first) {
  if (first < 0 || first > x.c()) throw std::invalid_argument("split_channels: bad split");
  BasicTensor<T> a(x.n(), first, x.h(), x.w()), b(x.n(), x.c() - first, x.h(), x.w());
  for (int n = 0; n < x.n(); ++n) {
    auto src = x.sample(n);
    auto da = a.sample(n);
    auto db = b.sample(n);
    std::copy(src.begin(), src.begin() + da.size(), da.begin());
    std::copy(src.begin() + da.size(), src.end(), db.begin());
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel, bool bias)
    : in_(in_channels), out_(out_channels), k_(kernel), pad_(kernel / 2), has_bias_(bias) {
  if (kernel % 2 != 1) throw std::invalid_argument("Conv2d: kernel must be odd");
  weight_ = {name + ".weight", BasicTensor<T>(out_, in_, k_, k_),
             BasicTensor<T>(out_, in_, k_, k_)};
  if (has_bias_) {
    bias_ = {name + ".bias", BasicTensor<T>(1, out_, 1, 1), BasicTensor<T>(1, out_, 1, 1)};
  }
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  he_normal(weight_.value, in_ * k_ * k_, rng);
  if (has_bias_) bias_.value.fill(T(0));
}

template <typename T>
void Conv2d<T>::collect(ParamRegistry<T>& reg) {
  reg.add(weight_);
  if (has_bias_) reg.add(bias_);
}

template <typename T>
void Conv2d<T>::im2col(const T* src, int h, int w) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  col_.resize(static_cast<std::size_t>(in_) * k_ * k_ * hw);
  T* col = col_.data();
  for (int ci = 0; ci < in_; ++ci) {
    const T* plane = src + ci * hw;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * hw;
        const int dy = ky - pad_, dx = kx - pad_;
        const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* d = dst + static_cast<std::size_t>(y) * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h || x_lo >= x_hi) {
            std::fill(d, d + w, T(0));
            continue;
          }
          const T* s = plane + static_cast<std::size_t>(sy) * w;
          std::fill(d, d + x_lo, T(0));
          std::memcpy(d + x_lo, s + x_lo + dx, sizeof(T) * (x_hi - x_lo));
          std::fill(d + x_hi, d + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(T* dst, int h, int w) const {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::fill(dst, dst + in_ * hw, T(0));
  const T* col = col_.data();
  for (int ci = 0; ci < in_; ++ci) {
    T* plane = dst + ci * hw;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx) * hw;
        const int dy = ky - pad_, dx = kx - pad_;
        const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* s = src + static_cast<std::size_t>(y) * w;
          T* d = plane + static_cast<std::size_t>(sy) * w + dx;
          for (int x = x_lo; x < x_hi; ++x) d[x] += s[x];
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x) {
  if (x.c() != in_) {
    throw std::invalid_argument(weight_.name + ": expected " + std::to_string(in_) +
                                " input channels, got " + std::to_string(x.c()));
  }
  input_ = x;
  const int h = x.h(), w = x.w();
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  const Eigen::Index kdim = static_cast<Eigen::Index>(in_) * k_ * k_;
  BasicTensor<T> y(x.n(), out_, h, w);
  CMapMat<T> wmat(weight_.value.data(), out_, kdim);
  for (int n = 0; n < x.n(); ++n) {
    MapMat<T> ymat(y.sample(n).data(), out_, hw);
    if (k_ == 1) {
      ymat.noalias() = wmat * CMapMat<T>(x.sample(n).data(), kdim, hw);
    } else {
      im2col(x.sample(n).data(), h, w);
      ymat.noalias() = wmat * CMapMat<T>(col_.data(), kdim, hw);
    }
    if (has_bias_) {
      ymat.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
          bias_.value.data(), out_);
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& dy) {
  const int h = input_.h(), w = input_.w();
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  const Eigen::Index kdim = static_cast<Eigen::Index>(in_) * k_ * k_;
  require_same_shape(dy.shape(), Shape{input_.n(), out_, h, w}, "Conv2d::backward");
  BasicTensor<T> dx(input_.shape());
  CMapMat<T> wmat(weight_.value.data(), out_, kdim);
  MapMat<T> dw(weight_.grad.data(), out_, kdim);
  for (int n = 0; n < dy.n(); ++n) {
    CMapMat<T> g(dy.sample(n).data(), out_, hw);
    if (has_bias_) {
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.grad.data(), out_) +=
          g.rowwise().sum();
    }
    if (k_ == 1) {
      dw.noalias() += g * CMapMat<T>(input_.sample(n).data(), kdim, hw).transpose();
      MapMat<T>(dx.sample(n).data(), kdim, hw).noalias() = wmat.transpose() * g;
    } else {
      im2col(input_.sample(n).data(), h, w);
      dw.noalias() += g * CMapMat<T>(col_.data(), kdim, hw).transpose();
      MapMat<T>(col_.data(), kdim, hw).noalias() = wmat.transpose() * g;
      col2im(dx.sample(n).data(), h, w);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = {name + ".gamma", BasicTensor<T>(1, channels, 1, 1, T(1)),
            BasicTensor<T>(1, channels, 1, 1)};
  beta_ = {name + ".beta", BasicTensor<T>(1, channels, 1, 1), BasicTensor<T>(1, channels, 1, 1)};
  running_mean_ = BasicTensor<T>(1, channels, 1, 1);
  running_var_ = BasicTensor<T>(1, channels, 1, 1, T(1));
  name_ = std::move(name);
}

template <typename T>
void BatchNorm2d<T>::collect(ParamRegistry<T>& reg) {
  reg.add(gamma_);
  reg.add(beta_);
  reg.add_buffer(name_ + ".running_mean", running_mean_);
  reg.add_buffer(name_ + ".running_var", running_var_);
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (x.c() != channels_) throw std::invalid_argument(name_ + ": channel mismatch");
  last_mode_ = mode;
  const std::size_t hw = x.shape().plane_size();
  const double count = static_cast<double>(x.n()) * hw;
  BasicTensor<T> y(x.shape());
  xhat_ = BasicTensor<T>(x.shape());
  inv_std_.assign(channels_, 0.0);
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n)
        for (T v : x.plane(n, c)) s += v;
      mean = s / count;
      double ss = 0.0;
      for (int n = 0; n < x.n(); ++n)
        for (T v : x.plane(n, c)) ss += (v - mean) * (v - mean);
      var = ss / count;
      const double unbiased = count > 1 ? ss / (count - 1) : var;
      running_mean_.data()[c] =
          static_cast<T>((1 - momentum_) * running_mean_.data()[c] + momentum_ * mean);
      running_var_.data()[c] =
          static_cast<T>((1 - momentum_) * running_var_.data()[c] + momentum_ * unbiased);
    } else {
      mean = running_mean_.data()[c];
      var = running_var_.data()[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma_.value.data()[c], b = beta_.value.data()[c];
    for (int n = 0; n < x.n(); ++n) {
      auto src = x.plane(n, c);
      auto xh = xhat_.plane(n, c);
      auto dst = y.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = (src[i] - mean) * inv;
        xh[i] = static_cast<T>(v);
        dst[i] = static_cast<T>(g * v + b);
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::backward(const BasicTensor<T>& dy) {
  require_same_shape(dy.shape(), xhat_.shape(), "BatchNorm2d::backward");
  const std::size_t hw = dy.shape().plane_size();
  const double count = static_cast<double>(dy.n()) * hw;
  BasicTensor<T> dx(dy.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      auto g = dy.plane(n, c);
      auto xh = xhat_.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
      }
    }
    gamma_.grad.data()[c] += static_cast<T>(sum_dy_xhat);
    beta_.grad.data()[c] += static_cast<T>(sum_dy);
    const double gam = gamma_.value.data()[c];
    const double inv = inv_std_[c];
    for (int n = 0; n < dy.n(); ++n) {
      auto g = dy.plane(n, c);
      auto xh = xhat_.plane(n, c);
      auto d = dx.plane(n, c);
      if (last_mode_ == Mode::Train) {
        const double k = gam * inv / count;
        for (std::size_t i = 0; i < hw; ++i) {
          d[i] = static_cast<T>(k * (count * g[i] - sum_dy - xh[i] * sum_dy_xhat));
        }
      } else {
        for (std::size_t i = 0; i < hw; ++i) d[i] = static_cast<T>(gam * inv * g[i]);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> ReLU<T>::forward(const BasicTensor<T>& x) {
  output_ = x;
  for (auto& v : output_.values()) v = v > T(0) ? v : T(0);
  return output_;
}

template <typename T>
BasicTensor<T> ReLU<T>::backward(const BasicTensor<T>& dy) const {
  BasicTensor<T> dx(dy.shape());
  const T* o = output_.data();
  const T* g = dy.data();
  T* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] = o[i] > T(0) ? g[i] : T(0);
  return dx;
}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(const std::string& name, int in_channels, int out_channels)
    : conv_(name + ".conv", in_channels, out_channels, 3, false),
      norm_(name + ".norm", out_channels) {}

template <typename T>
BasicTensor<T> ConvBnRelu<T>::forward(const BasicTensor<T>& x, Mode mode) {
  return relu_.forward(norm_.forward(conv_.forward(x), mode));
}

template <typename T>
BasicTensor<T> ConvBnRelu<T>::backward(const BasicTensor<T>& dy) {
  return conv_.backward(norm_.backward(relu_.backward(dy)));
}

template <typename T>
void ConvBnRelu<T>::collect(ParamRegistry<T>& reg) {
  conv_.collect(reg);
  norm_.collect(reg);
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> MaxPool2<T>::forward(const BasicTensor<T>& x) {
  if (x.h() % 2 || x.w() % 2) {
    throw std::invalid_argument("MaxPool2: odd spatial extent " + x.shape().str());
  }
  in_shape_ = x.shape();
  const int oh = x.h() / 2, ow = x.w() / 2;
  BasicTensor<T> y(x.n(), x.c(), oh, ow);
  argmax_.resize(y.size());
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      auto src = x.plane(n, c);
      auto dst = y.plane(n, c);
      for (int yy = 0; yy < oh; ++yy) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          const std::uint32_t i0 = static_cast<std::uint32_t>(2 * yy * x.w() + 2 * xx);
          std::uint32_t best = i0;
          for (std::uint32_t cand : {i0 + 1, i0 + static_cast<std::uint32_t>(x.w()),
                                     i0 + static_cast<std::uint32_t>(x.w()) + 1}) {
            if (src[cand] > src[best]) best = cand;
          }
          argmax_[o] = best;
          dst[static_cast<std::size_t>(yy) * ow + xx] = src[best];
        }
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> MaxPool2<T>::backward(const BasicTensor<T>& dy) const {
  BasicTensor<T> dx(in_shape_);
  std::size_t o = 0;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      auto g = dy.plane(n, c);
      auto d = dx.plane(n, c);
      for (std::size_t i = 0; i < g.size(); ++i, ++o) d[argmax_[o]] += g[i];
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> upsample2(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      auto src = x.plane(n, c);
      auto dst = y.plane(n, c);
      const int ow = x.w() * 2;
      for (int yy = 0; yy < x.h(); ++yy) {
        T* r0 = dst.data() + static_cast<std::size_t>(2 * yy) * ow;
        const T* s = src.data() + static_cast<std::size_t>(yy) * x.w();
        for (int xx = 0; xx < x.w(); ++xx) r0[2 * xx] = r0[2 * xx + 1] = s[xx];
        std::copy(r0, r0 + ow, r0 + ow);
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& dy) {
  BasicTensor<T> dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      auto g = dy.plane(n, c);
      auto d = dx.plane(n, c);
      for (int yy = 0; yy < dy.h(); ++yy) {
        const T* s = g.data() + static_cast<std::size_t>(yy) * dy.w();
        T* r = d.data() + static_cast<std::size_t>(yy / 2) * dx.w();
        for (int xx = 0; xx < dy.w(); ++xx) r[xx / 2] += s[xx];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> Sigmoid<T>::forward(const BasicTensor<T>& x) {
  output_ = BasicTensor<T>(x.shape());
  const T* s = x.data();
  T* d = output_.data();
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = T(1) / (T(1) + std::exp(-s[i]));
  return output_;
}

template <typename T>
BasicTensor<T> Sigmoid<T>::backward(const BasicTensor<T>& dy) const {
  BasicTensor<T> dx(dy.shape());
  const T* o = output_.data();
  const T* g = dy.data();
  T* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] = g[i] * o[i] * (T(1) - o[i]);
  return dx;
}

template <typename T>
BasicTensor<T> ChannelSoftmax<T>::forward(const BasicTensor<T>& x) {
  output_ = BasicTensor<T>(x.shape());
  const std::size_t hw = x.shape().plane_size();
  for (int n = 0; n < x.n(); ++n) {
    const T* s = x.sample(n).data();
    T* d = output_.sample(n).data();
    for (std::size_t i = 0; i < hw; ++i) {
      T mx = s[i];
      for (int c = 1; c < x.c(); ++c) mx = std::max(mx, s[c * hw + i]);
      T sum = T(0);
      for (int c = 0; c < x.c(); ++c) {
        d[c * hw + i] = std::exp(s[c * hw + i] - mx);
        sum += d[c * hw + i];
      }
      for (int c = 0; c < x.c(); ++c) d[c * hw + i] /= sum;
    }
  }
  return output_;
}

template <typename T>
BasicTensor<T> ChannelSoftmax<T>::backward(const BasicTensor<T>& dy) const {
  BasicTensor<T> dx(dy.shape());
  const std::size_t hw = dy.shape().plane_size();
  for (int n = 0; n < dy.n(); ++n) {
    const T* o = output_.sample(n).data();
    const T* g = dy.sample(n).data();
    T* d = dx.sample(n).data();
    for (std::size_t i = 0; i < hw; ++i) {
      T dot = T(0);
      for (int c = 0; c < dy.c(); ++c) dot += g[c * hw + i] * o[c * hw + i];
      for (int c = 0; c < dy.c(); ++c) d[c * hw + i] = o[c * hw + i] * (g[c * hw + i] - dot);
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.n(), x.c(), 1, 1);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      double s = 0.0;
      for (T v : x.plane(n, c)) s += v;
      y(n, c, 0, 0) = static_cast<T>(s / static_cast<double>(x.shape().plane_size()));
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& dy, const Shape& in_shape) {
  BasicTensor<T> dx(in_shape);
  const T scale = T(1) / static_cast<T>(in_shape.plane_size());
  for (int n = 0; n < in_shape.n; ++n) {
    for (int c = 0; c < in_shape.c; ++c) {
      const T g = dy(n, c, 0, 0) * scale;
      for (auto& v : dx.plane(n, c)) v = g;
    }
  }
  return dx;
}

template <typename T>
Linear<T>::Linear(std::string name, int in_features, int out_features)
    : in_(in_features), out_(out_features) {
  weight_ = {name + ".weight", BasicTensor<T>(1, 1, out_, in_), BasicTensor<T>(1, 1, out_, in_)};
  bias_ = {name + ".bias", BasicTensor<T>(1, out_, 1, 1), BasicTensor<T>(1, out_, 1, 1)};
}

template <typename T>
void Linear<T>::init(Rng& rng) {
  he_normal(weight_.value, in_, rng);
  bias_.value.fill(T(0));
}

template <typename T>
void Linear<T>::collect(ParamRegistry<T>& reg) {
  reg.add(weight_);
  reg.add(bias_);
}

template <typename T>
BasicTensor<T> Linear<T>::forward(const BasicTensor<T>& x) {
  if (x.c() * x.h() * x.w() != in_) throw std::invalid_argument(weight_.name + ": bad input");
  input_ = x;
  BasicTensor<T> y(x.n(), out_, 1, 1);
  CMapMat<T> w(weight_.value.data(), out_, in_);
  CMapMat<T> xin(x.data(), x.n(), in_);
  MapMat<T> ymat(y.data(), x.n(), out_);
  ymat.noalias() = xin * w.transpose();
  ymat.rowwise() +=
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.data(), out_);
  return y;
}

template <typename T>
BasicTensor<T> Linear<T>::backward(const BasicTensor<T>& dy) {
  BasicTensor<T> dx(input_.shape());
  CMapMat<T> w(weight_.value.data(), out_, in_);
  CMapMat<T> g(dy.data(), dy.n(), out_);
  MapMat<T>(weight_.grad.data(), out_, in_).noalias() +=
      g.transpose() * CMapMat<T>(input_.data(), input_.n(), in_);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad.data(), out_) += g.colwise().sum();
  MapMat<T>(dx.data(), input_.n(), in_).noalias() = g * w;
  return dx;
}

#define JOINED_INSTANTIATE(T)                                                             \
  template void accumulate<T>(BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> concat_channels<T>(const BasicTensor<T>&, const BasicTensor<T>&); \
  template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels<T>(const BasicTensor<T>&, \
                                                                       int);              \
  template class Conv2d<T>;                                                               \
  template class BatchNorm2d<T>;                                                          \
  template class ReLU<T>;                                                                 \
  template class ConvBnRelu<T>;                                                           \
  template class MaxPool2<T>;                                                             \
  template BasicTensor<T> upsample2<T>(const BasicTensor<T>&);                            \
  template BasicTensor<T> upsample2_backward<T>(const BasicTensor<T>&);                   \
  template class Sigmoid<T>;                                                              \
  template class ChannelSoftmax<T>;                                                       \
  template BasicTensor<T> global_avg_pool<T>(const BasicTensor<T>&);                      \
  template BasicTensor<T> global_avg_pool_backward<T>(const BasicTensor<T>&, const Shape&); \
  template class Linear<T>;

JOINED_INSTANTIATE(float)
JOINED_INSTANTIATE(double)

}  // namespace joined::nn
