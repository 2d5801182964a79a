#include "joined/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace joined::geometry {

Affine Affine::rotation(double radians) {
  const double cs = std::cos(radians), sn = std::sin(radians);
  return {cs, -sn, 0, sn, cs, 0};
}

Affine Affine::inverse() const {
  const double det = a * d - b * c;
  if (det == 0.0) throw std::domain_error("Affine::inverse: singular map");
  Affine r;
  r.a = d / det;
  r.b = -b / det;
  r.c = -c / det;
  r.d = a / det;
  r.tx = -(r.a * tx + r.b * ty);
  r.ty = -(r.c * tx + r.d * ty);
  return r;
}

Affine Affine::then(const Affine& n) const {
  Affine r;
  r.a = n.a * a + n.b * c;
  r.b = n.a * b + n.b * d;
  r.c = n.c * a + n.d * c;
  r.d = n.c * b + n.d * d;
  r.tx = n.a * tx + n.b * ty + n.tx;
  r.ty = n.c * tx + n.d * ty + n.ty;
  return r;
}

Affine resize_map(int src_h, int src_w, int dst_h, int dst_w) {
  const double sx = static_cast<double>(dst_w) / src_w;
  const double sy = static_cast<double>(dst_h) / src_h;
  return Affine::translation(0.5, 0.5)
      .then(Affine::scaling(sx, sy))
      .then(Affine::translation(-0.5, -0.5));
}

Tensor warp_bilinear(const Tensor& src, const Affine& src_to_dst, int out_h, int out_w) {
  const Affine inv = src_to_dst.inverse();
  Tensor out(src.n(), src.c(), out_h, out_w);
  const int h = src.h(), w = src.w();
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Coordinate s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const double fx = std::floor(s.x), fy = std::floor(s.y);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double ax = s.x - fx, ay = s.y - fy;
      const int xs[2] = {x0, x0 + 1};
      const int ys[2] = {y0, y0 + 1};
      const double wx[2] = {1 - ax, ax};
      const double wy[2] = {1 - ay, ay};
      for (int n = 0; n < src.n(); ++n) {
        for (int c = 0; c < src.c(); ++c) {
          const auto plane = src.plane(n, c);
          double v = 0.0;
          for (int j = 0; j < 2; ++j) {
            if (ys[j] < 0 || ys[j] >= h || wy[j] == 0.0) continue;
            for (int i = 0; i < 2; ++i) {
              if (xs[i] < 0 || xs[i] >= w || wx[i] == 0.0) continue;
              v += wy[j] * wx[i] * plane[static_cast<std::size_t>(ys[j]) * w + xs[i]];
            }
          }
          out(n, c, y, x) = static_cast<float>(v);
        }
      }
    }
  }
  return out;
}

LabelMask warp_nearest(const LabelMask& src, const Affine& src_to_dst, int out_h, int out_w) {
  const Affine inv = src_to_dst.inverse();
  LabelMask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Coordinate s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const int sx = static_cast<int>(std::floor(s.x + 0.5));
      const int sy = static_cast<int>(std::floor(s.y + 0.5));
      if (sx < 0 || sy < 0 || sx >= src.w() || sy >= src.h()) continue;
      out(y, x) = src(sy, sx);
    }
  }
  return out;
}

int RoiBox::out_size() const { return static_cast<int>(std::lround(size * scale)); }

Affine RoiBox::to_crop() const {
  const Affine shift = Affine::translation(-x0, -y0);
  if (scale == 1.0) return shift;
  return shift.then(resize_map(size, size, out_size(), out_size()));
}

RoiBox crop_roi(Coordinate center, int size, int h, int w, double scale) {
  if (size <= 0 || size > std::min(h, w)) {
    throw std::invalid_argument("crop_roi: window " + std::to_string(size) +
                                " does not fit a " + std::to_string(h) + "x" +
                                std::to_string(w) + " frame");
  }
  RoiBox box;
  box.size = size;
  box.scale = scale;
  box.x0 = static_cast<int>(std::floor(center.x - size / 2.0 + 0.5));
  box.y0 = static_cast<int>(std::floor(center.y - size / 2.0 + 0.5));
  box.x0 = std::clamp(box.x0, 0, w - size);
  box.y0 = std::clamp(box.y0, 0, h - size);
  return box;
}

Tensor extract(const Tensor& image, const RoiBox& box) {
  if (box.scale != 1.0) return warp_bilinear(image, box.to_crop(), box.out_size(), box.out_size());
  Tensor out(image.n(), image.c(), box.size, box.size);
  for (int n = 0; n < image.n(); ++n)
    for (int c = 0; c < image.c(); ++c)
      for (int y = 0; y < box.size; ++y)
        for (int x = 0; x < box.size; ++x) out(n, c, y, x) = image(n, c, box.y0 + y, box.x0 + x);
  return out;
}

LabelMask extract(const LabelMask& mask, const RoiBox& box) {
  if (box.scale != 1.0) return warp_nearest(mask, box.to_crop(), box.out_size(), box.out_size());
  LabelMask out(box.size, box.size);
  for (int y = 0; y < box.size; ++y)
    for (int x = 0; x < box.size; ++x) out(y, x) = mask(box.y0 + y, box.x0 + x);
  return out;
}

void paste(LabelMask& full, const LabelMask& crop, const RoiBox& box) {
  if (box.scale == 1.0) {
    for (int y = 0; y < box.size; ++y)
      for (int x = 0; x < box.size; ++x) full(box.y0 + y, box.x0 + x) = crop(y, x);
    return;
  }
  const Affine to_crop = box.to_crop();
  for (int y = box.y0; y < box.y0 + box.size; ++y) {
    for (int x = box.x0; x < box.x0 + box.size; ++x) {
      const Coordinate c = to_crop.apply({static_cast<double>(x), static_cast<double>(y)});
      const int cx = std::clamp(static_cast<int>(std::floor(c.x + 0.5)), 0, crop.w() - 1);
      const int cy = std::clamp(static_cast<int>(std::floor(c.y + 0.5)), 0, crop.h() - 1);
      full(y, x) = crop(cy, cx);
    }
  }
}

}  // namespace joined::geometry
