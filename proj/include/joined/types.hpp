#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "joined/tensor.hpp"

namespace joined {

/// Pixel position: x is the column, y the row, origin top-left, pixel centers on
/// integer coordinates.
struct Coordinate {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Coordinate&, const Coordinate&) = default;
};

inline Coordinate midpoint(Coordinate a, Coordinate b) {
  return {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
}

/// OD center and fovea; presence is carried by the optionals.
struct LandmarkAnnotation {
  std::optional<Coordinate> od_center;
  std::optional<Coordinate> fovea;

  bool od_present() const { return od_center.has_value(); }
  bool fovea_present() const { return fovea.has_value(); }
};

enum class Label : std::uint8_t { Background = 0, OD = 1, OC = 2 };

const char* label_name(Label l);

/// Integer segmentation mask. OD denotes the disc rim; the full disc region is
/// OD ∪ OC.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(int h, int w, Label fill = Label::Background)
      : h_(h), w_(w), labels_(static_cast<std::size_t>(h) * w, fill) {}

  int h() const { return h_; }
  int w() const { return w_; }
  bool empty() const { return labels_.empty(); }

  Label& operator()(int y, int x) { return labels_[static_cast<std::size_t>(y) * w_ + x]; }
  Label operator()(int y, int x) const {
    return labels_[static_cast<std::size_t>(y) * w_ + x];
  }
  const std::vector<Label>& labels() const { return labels_; }
  std::vector<Label>& labels() { return labels_; }

  bool in_disc(int y, int x) const { return (*this)(y, x) != Label::Background; }
  std::size_t count(Label l) const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<Label> labels_;
};

/// One fundus image with its annotations. `image` is (1,3,H,W) RGB in [0,1].
struct FundusSample {
  std::string image_id;
  Tensor image;
  std::optional<LabelMask> mask;
  LandmarkAnnotation landmarks;
  bool oc_present = false;

  int h() const { return image.h(); }
  int w() const { return image.w(); }
};

/// Rejected user input (files, images, annotations).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration; the message names the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace joined
