#pragma once

#include "joined/geometry.hpp"
#include "joined/tensor.hpp"
#include "joined/types.hpp"

namespace joined::preprocess {

/// Inclusive pixel bounds of the illuminated field of view.
struct FovBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  friend bool operator==(const FovBox&, const FovBox&) = default;
};

/// Bounding box of pixels whose brightest channel exceeds `floor`.
/// Throws InputError when no pixel qualifies.
FovBox detect_fov(const Tensor& image, double floor = 0.04);

struct Preprocessed {
  Tensor image;                 // (1,3,size,size)
  FovBox fov;
  geometry::Affine to_net;      // original frame -> network frame
  int src_h = 0, src_w = 0;

  Coordinate to_network(Coordinate p) const { return to_net.apply(p); }
  Coordinate to_original(Coordinate p) const { return to_net.inverse().apply(p); }
};

/// Crops the field-of-view rectangle and resizes it to size×size.
Preprocessed preprocess(const Tensor& image, int size = 256, double floor = 0.04);

/// Brings a full-frame label mask into the network frame of `pre`.
LabelMask mask_to_network(const LabelMask& mask, const Preprocessed& pre);

}  // namespace joined::preprocess
