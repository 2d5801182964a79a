#pragma once

#include "joined/tensor.hpp"
#include "joined/types.hpp"

namespace joined::geometry {

/// Planar affine map: x' = a x + b y + tx, y' = c x + d y + ty.
struct Affine {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;

  static Affine translation(double dx, double dy) { return {1, 0, dx, 0, 1, dy}; }
  static Affine scaling(double sx, double sy) { return {sx, 0, 0, 0, sy, 0}; }
  static Affine rotation(double radians);

  Coordinate apply(Coordinate p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
  Affine inverse() const;
  /// `next` applied after `*this`.
  Affine then(const Affine& next) const;
  bool is_identity() const { return *this == Affine{}; }

  friend bool operator==(const Affine&, const Affine&) = default;
};

/// Maps pixel centers when a `src` extent is resampled onto a `dst` extent
/// (pixel-area convention: u = (x + 0.5) * dst/src - 0.5).
Affine resize_map(int src_h, int src_w, int dst_h, int dst_w);

/// Output pixel p samples the source at src_to_dst.inverse()(p). Bilinear,
/// zero outside the source.
Tensor warp_bilinear(const Tensor& src, const Affine& src_to_dst, int out_h, int out_w);

/// Same with nearest-neighbour lookup; background outside the source.
LabelMask warp_nearest(const LabelMask& src, const Affine& src_to_dst, int out_h, int out_w);

/// Square crop window in the original frame. Crop pixels relate to original
/// pixels through `to_crop()`; `scale` resizes the window after cropping.
struct RoiBox {
  int x0 = 0;
  int y0 = 0;
  int size = 0;
  double scale = 1.0;

  int out_size() const;
  Affine to_crop() const;
  Coordinate crop(Coordinate p) const { return to_crop().apply(p); }
  Coordinate uncrop(Coordinate p) const { return to_crop().inverse().apply(p); }
  bool contains(int x, int y) const {
    return x >= x0 && x < x0 + size && y >= y0 && y < y0 + size;
  }
};

/// Window of side `size` centered on `center`, shifted (never shrunk) to fit
/// inside an h×w frame. Throws std::invalid_argument if size > min(h, w).
RoiBox crop_roi(Coordinate center, int size, int h, int w, double scale = 1.0);

Tensor extract(const Tensor& image, const RoiBox& box);
LabelMask extract(const LabelMask& mask, const RoiBox& box);

/// Writes the crop back into `full`; pixels outside the window are untouched.
void paste(LabelMask& full, const LabelMask& crop, const RoiBox& box);

}  // namespace joined::geometry
