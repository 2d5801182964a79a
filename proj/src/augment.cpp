#include "joined/augment.hpp"

#include <algorithm>
#include <cmath>

namespace joined::augment {

using geometry::Affine;

AugmentPolicy AugmentPolicy::none() {
  AugmentPolicy p;
  p.brightness = p.contrast = p.saturation = p.gamma = 0.0;
  p.hflip_prob = p.vflip_prob = p.rotation_prob = 0.0;
  p.rotation_max_deg = 0.0;
  p.scale_min = p.scale_max = 1.0;
  return p;
}

Affine AugmentDraw::geometric(int h, int w) const {
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  Affine m = Affine::translation(-cx, -cy);
  if (hflip) m = m.then(Affine::scaling(-1, 1));
  if (vflip) m = m.then(Affine::scaling(1, -1));
  if (scale != 1.0) m = m.then(Affine::scaling(scale, scale));
  if (angle_rad != 0.0) m = m.then(Affine::rotation(angle_rad));
  m = m.then(Affine::translation(cx, cy));
  if (!hflip && !vflip && scale == 1.0 && angle_rad == 0.0) return Affine{};
  return m;
}

AugmentDraw draw(const AugmentPolicy& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sym = [&](double m) { return m > 0 ? (2.0 * unit(rng) - 1.0) * m : 0.0; };
  AugmentDraw d;
  d.hflip = unit(rng) < p.hflip_prob;
  d.vflip = unit(rng) < p.vflip_prob;
  const bool rotate = unit(rng) < p.rotation_prob;
  const double angle = sym(p.rotation_max_deg) * M_PI / 180.0;
  d.angle_rad = rotate ? angle : 0.0;
  const double u = unit(rng);
  d.scale = p.scale_min == p.scale_max ? p.scale_min : p.scale_min + u * (p.scale_max - p.scale_min);
  d.brightness = sym(p.brightness);
  d.contrast = sym(p.contrast);
  d.saturation = sym(p.saturation);
  d.gamma = sym(p.gamma);
  return d;
}

namespace {

void photometric(const AugmentDraw& d, Tensor& image) {
  if (d.brightness == 0 && d.contrast == 0 && d.saturation == 0 && d.gamma == 0) return;
  const std::size_t hw = image.shape().plane_size();
  float* r = image.plane(0, 0).data();
  float* g = image.plane(0, 1).data();
  float* b = image.plane(0, 2).data();
  double mean = 0.0;
  for (std::size_t i = 0; i < hw; ++i) mean += (r[i] + g[i] + b[i]) / 3.0;
  mean /= static_cast<double>(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    double px[3] = {r[i], g[i], b[i]};
    const double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    for (double& v : px) {
      v += d.brightness;
      v = (v - mean) * (1.0 + d.contrast) + mean;
      v = gray + (v - gray) * (1.0 + d.saturation);
      v = std::pow(std::clamp(v, 0.0, 1.0), 1.0 + d.gamma);
    }
    r[i] = static_cast<float>(px[0]);
    g[i] = static_cast<float>(px[1]);
    b[i] = static_cast<float>(px[2]);
  }
}

std::optional<Coordinate> move(const std::optional<Coordinate>& c, const Affine& m, int h, int w) {
  if (!c) return std::nullopt;
  const Coordinate p = m.apply(*c);
  if (p.x < 0 || p.y < 0 || p.x > w - 1 || p.y > h - 1) return std::nullopt;
  return p;
}

}  // namespace

AugmentSample apply(const AugmentDraw& d, AugmentSample s) {
  const int h = s.image.h(), w = s.image.w();
  const Affine m = d.geometric(h, w);
  if (!m.is_identity()) {
    s.image = geometry::warp_bilinear(s.image, m, h, w);
    if (s.mask) s.mask = geometry::warp_nearest(*s.mask, m, h, w);
    if (s.distance) s.distance = geometry::warp_bilinear(*s.distance, m, h, w);
    if (s.heatmap) s.heatmap = geometry::warp_bilinear(*s.heatmap, m, h, w);
    s.landmarks.od_center = move(s.landmarks.od_center, m, h, w);
    s.landmarks.fovea = move(s.landmarks.fovea, m, h, w);
  }
  photometric(d, s.image);
  return s;
}

AugmentSample augment(AugmentSample sample, const AugmentPolicy& policy, std::mt19937_64& rng) {
  return apply(draw(policy, rng), std::move(sample));
}

}  // namespace joined::augment
