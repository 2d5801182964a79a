#include "joined/extraction.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace joined::extraction {

namespace {

int first_argmax(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

ChannelPeak peak_from_plane(std::span<const float> plane, int h, int w) {
  if (plane.size() != static_cast<std::size_t>(h) * w || h <= 0 || w <= 0) {
    throw std::invalid_argument("peak_from_plane: plane does not match extent");
  }
  std::vector<double> cols(w, 0.0), rows(h, 0.0);
  double peak = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = plane[static_cast<std::size_t>(y) * w + x];
      cols[x] += v;
      rows[y] += v;
      peak = std::max(peak, v);
    }
  }
  ChannelPeak p;
  p.at = {static_cast<double>(first_argmax(cols)), static_cast<double>(first_argmax(rows))};
  p.confidence = std::clamp(peak, 0.0, 1.0);
  return p;
}

LandmarkEstimate coords_from_heatmap(const Tensor& heatmap) {
  if (heatmap.n() != 1 || heatmap.c() != 2) {
    throw std::invalid_argument("coords_from_heatmap: expected (1,2,H,W), got " +
                                heatmap.shape().str());
  }
  const auto od = peak_from_plane(heatmap.plane(0, 0), heatmap.h(), heatmap.w());
  const auto fovea = peak_from_plane(heatmap.plane(0, 1), heatmap.h(), heatmap.w());
  return {od.at, fovea.at, od.confidence, fovea.confidence, false};
}

DistancePeaks peaks_from_distance_map(const Tensor& distance, std::optional<double> radius) {
  if (distance.n() != 1 || distance.c() != 1) {
    throw std::invalid_argument("peaks_from_distance_map: expected (1,1,H,W)");
  }
  const int h = distance.h(), w = distance.w();
  const auto v = distance.plane(0, 0);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (v.empty() || *lo == *hi) return {{0, 0}, {0, 0}, true};

  const std::size_t first = static_cast<std::size_t>(hi - v.begin());
  const int fx = static_cast<int>(first % w), fy = static_cast<int>(first / w);
  const double r = radius.value_or(h / 8.0);

  std::ptrdiff_t second = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (std::hypot(x - fx, y - fy) <= r) continue;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (second < 0 || v[i] > v[static_cast<std::size_t>(second)]) second = static_cast<std::ptrdiff_t>(i);
    }
  }
  DistancePeaks out;
  out.first = {static_cast<double>(fx), static_cast<double>(fy)};
  if (second < 0) {
    out.second = out.first;
    out.degenerate = true;
  } else {
    out.second = {static_cast<double>(second % w), static_cast<double>(second / w)};
  }
  return out;
}

OrderedLandmarks pair_consistency(const LandmarkEstimate& detector, const DistancePeaks& peaks) {
  auto dist = [](Coordinate a, Coordinate b) { return std::hypot(a.x - b.x, a.y - b.y); };
  const double keep = dist(peaks.first, detector.od) + dist(peaks.second, detector.fovea);
  const double swap = dist(peaks.second, detector.od) + dist(peaks.first, detector.fovea);
  if (swap < keep) return {peaks.second, peaks.first};
  return {peaks.first, peaks.second};
}

Coordinate fovea_fallback(Coordinate od, int h, int w, const FallbackParams& params) {
  const double center_x = (w - 1) / 2.0;
  const double direction = od.x <= center_x ? 1.0 : -1.0;
  Coordinate f{od.x + direction * params.horizontal_fraction * w,
               od.y + params.vertical_fraction * h};
  f.x = std::clamp(f.x, 0.0, static_cast<double>(w - 1));
  f.y = std::clamp(f.y, 0.0, static_cast<double>(h - 1));
  return f;
}

void apply_fovea_fallback(LandmarkEstimate& est, int h, int w, const FallbackParams& params) {
  est.fovea_via_fallback = est.confidence_fovea < params.threshold;
  if (est.fovea_via_fallback) est.fovea = fovea_fallback(est.od, h, w, params);
}

Coordinate ensemble_coords(Coordinate regression, Coordinate heatmap) {
  return midpoint(regression, heatmap);
}

}  // namespace joined::extraction
