#include "joined/preprocess.hpp"

#include <algorithm>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

namespace joined::preprocess {

FovBox detect_fov(const Tensor& image, double floor) {
  FovBox box{image.w(), image.h(), -1, -1};
  for (int y = 0; y < image.h(); ++y) {
    for (int x = 0; x < image.w(); ++x) {
      float v = 0.0f;
      for (int c = 0; c < image.c(); ++c) v = std::max(v, image(0, c, y, x));
      if (v <= floor) continue;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  }
  if (box.x1 < 0) throw InputError("preprocess: empty field of view (no pixel above floor)");
  return box;
}

namespace {

/// Area-averaging downscale of one crop; consistent with resize_map.
Tensor shrink_area(const Tensor& crop, int size) {
  Tensor out(1, crop.c(), size, size);
  for (int c = 0; c < crop.c(); ++c) {
    cv::Mat src(crop.h(), crop.w(), CV_32F, const_cast<float*>(crop.plane(0, c).data()));
    cv::Mat dst(size, size, CV_32F, out.plane(0, c).data());
    cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_AREA);
  }
  return out;
}

}  // namespace

Preprocessed preprocess(const Tensor& image, int size, double floor) {
  Preprocessed p;
  p.src_h = image.h();
  p.src_w = image.w();
  p.fov = detect_fov(image, floor);
  const auto shift = geometry::Affine::translation(-p.fov.x0, -p.fov.y0);
  p.to_net = shift.then(geometry::resize_map(p.fov.height(), p.fov.width(), size, size));
  if (p.to_net.is_identity()) {
    p.image = image;
    return p;
  }
  if (p.fov.width() >= 2 * size && p.fov.height() >= 2 * size) {
    geometry::RoiBox box{p.fov.x0, p.fov.y0, 0, 1.0};
    Tensor crop(1, image.c(), p.fov.height(), p.fov.width());
    for (int c = 0; c < image.c(); ++c)
      for (int y = 0; y < crop.h(); ++y)
        for (int x = 0; x < crop.w(); ++x) crop(0, c, y, x) = image(0, c, box.y0 + y, box.x0 + x);
    p.image = shrink_area(crop, size);
  } else {
    p.image = geometry::warp_bilinear(image, p.to_net, size, size);
  }
  return p;
}

LabelMask mask_to_network(const LabelMask& mask, const Preprocessed& pre) {
  const int size = pre.image.h();
  if (pre.to_net.is_identity()) return mask;
  return geometry::warp_nearest(mask, pre.to_net, size, size);
}

}  // namespace joined::preprocess
