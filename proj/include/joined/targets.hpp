#pragma once

#include <optional>

#include "joined/tensor.hpp"
#include "joined/types.hpp"

namespace joined::targets {

/// Normalized min-distance-to-landmark field, values in [0,1], 1 at landmarks.
/// `supervised` is false when no landmark was present; the values are then all
/// zero and the sample must be excluded from the distance loss.
struct DistanceMap {
  Tensor values;  // (1,1,H,W)
  bool supervised = true;
};

/// Two-channel Gaussian landmark heatmap: channel 0 OD, channel 1 fovea.
struct HeatmapPair {
  Tensor channels;  // (1,2,H,W)
  double sigma = 0.0;
};

/// Binary mask of heatmap > 0.5, per channel.
struct HeatmapMask {
  Tensor channels;  // (1,2,H,W) with values in {0,1}
};

struct DetectionTarget {
  HeatmapPair heatmap;
  HeatmapMask mask;
};

/// Bounding-box midpoint of every OD or OC pixel; nullopt when there is none.
std::optional<Coordinate> od_center_from_mask(const LabelMask& mask);

DistanceMap make_distance_map(int h, int w, const LandmarkAnnotation& annot);

/// Peak-normalized Gaussian centered at `center`, (1,1,H,W). Absent center gives
/// zeros. Throws std::invalid_argument when sigma <= 0.
Tensor gaussian_heatmap(int h, int w, const std::optional<Coordinate>& center, double sigma);

DetectionTarget make_detection_target(int h, int w, const LandmarkAnnotation& annot,
                                      double sigma);

/// Elementwise `values > level` for any number of channels.
Tensor threshold(const Tensor& values, double level = 0.5);

/// Heatmap width rule: image height / 100.
inline double default_sigma(int height, double divisor = 100.0) { return height / divisor; }

/// Three-channel one-hot segmentation target in (OC, OD rim, background) order.
Tensor one_hot(const LabelMask& mask);

}  // namespace joined::targets
