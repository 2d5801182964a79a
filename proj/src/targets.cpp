#include "joined/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace joined {

const char* label_name(Label l) {
  switch (l) {
    case Label::Background: return "background";
    case Label::OD: return "OD";
    case Label::OC: return "OC";
  }
  return "?";
}

std::size_t LabelMask::count(Label l) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), l));
}

}  // namespace joined

namespace joined::targets {

std::optional<Coordinate> od_center_from_mask(const LabelMask& mask) {
  int min_x = std::numeric_limits<int>::max(), max_x = -1;
  int min_y = std::numeric_limits<int>::max(), max_y = -1;
  for (int y = 0; y < mask.h(); ++y) {
    for (int x = 0; x < mask.w(); ++x) {
      if (!mask.in_disc(y, x)) continue;
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
  }
  if (max_x < 0) return std::nullopt;
  return Coordinate{(min_x + max_x) / 2.0, (min_y + max_y) / 2.0};
}

DistanceMap make_distance_map(int h, int w, const LandmarkAnnotation& annot) {
  DistanceMap out{Tensor(1, 1, h, w), true};
  std::vector<Coordinate> centers;
  if (annot.od_center) centers.push_back(*annot.od_center);
  if (annot.fovea) centers.push_back(*annot.fovea);
  if (centers.empty()) {
    out.supervised = false;
    return out;
  }

  std::vector<double> dist(static_cast<std::size_t>(h) * w);
  double max_d = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) d = std::min(d, std::hypot(x - c.x, y - c.y));
      dist[static_cast<std::size_t>(y) * w + x] = d;
      max_d = std::max(max_d, d);
    }
  }
  auto values = out.values.values();
  for (std::size_t i = 0; i < dist.size(); ++i) {
    values[i] = max_d > 0.0 ? static_cast<float>(1.0 - dist[i] / max_d) : 1.0f;
  }
  return out;
}

Tensor gaussian_heatmap(int h, int w, const std::optional<Coordinate>& center, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_heatmap: sigma must be positive, got " +
                                std::to_string(sigma));
  }
  Tensor out(1, 1, h, w);
  if (!center) return out;

  const double norm = 1.0 / (2.0 * M_PI * sigma * sigma);
  std::vector<double> raw(static_cast<std::size_t>(h) * w);
  double peak = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - center->x, dy = y - center->y;
      const double g = norm * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      raw[static_cast<std::size_t>(y) * w + x] = g;
      peak = std::max(peak, g);
    }
  }
  if (peak <= 0.0) return out;
  auto values = out.values();
  for (std::size_t i = 0; i < raw.size(); ++i) values[i] = static_cast<float>(raw[i] / peak);
  return out;
}

DetectionTarget make_detection_target(int h, int w, const LandmarkAnnotation& annot,
                                      double sigma) {
  DetectionTarget t;
  t.heatmap.sigma = sigma;
  t.heatmap.channels = Tensor(1, 2, h, w);
  const Tensor od = gaussian_heatmap(h, w, annot.od_center, sigma);
  const Tensor fovea = gaussian_heatmap(h, w, annot.fovea, sigma);
  std::copy(od.values().begin(), od.values().end(), t.heatmap.channels.plane(0, 0).begin());
  std::copy(fovea.values().begin(), fovea.values().end(),
            t.heatmap.channels.plane(0, 1).begin());
  t.mask.channels = threshold(t.heatmap.channels, 0.5);
  return t;
}

Tensor threshold(const Tensor& values, double level) {
  Tensor out(values.shape());
  std::transform(values.values().begin(), values.values().end(), out.data(),
                 [level](float v) { return v > level ? 1.0f : 0.0f; });
  return out;
}

Tensor one_hot(const LabelMask& mask) {
  Tensor out(1, 3, mask.h(), mask.w());
  for (int y = 0; y < mask.h(); ++y) {
    for (int x = 0; x < mask.w(); ++x) {
      switch (mask(y, x)) {
        case Label::OC: out(0, 0, y, x) = 1.0f; break;
        case Label::OD: out(0, 1, y, x) = 1.0f; break;
        case Label::Background: out(0, 2, y, x) = 1.0f; break;
      }
    }
  }
  return out;
}

}  // namespace joined::targets
