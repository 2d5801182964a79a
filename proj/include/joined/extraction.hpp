#pragma once

#include <optional>
#include <span>
#include <utility>

#include "joined/tensor.hpp"
#include "joined/types.hpp"

namespace joined::extraction {

struct LandmarkEstimate {
  Coordinate od;
  Coordinate fovea;
  double confidence_od = 0.0;
  double confidence_fovea = 0.0;
  bool fovea_via_fallback = false;
};

struct ChannelPeak {
  Coordinate at;
  double confidence = 0.0;
};

/// Axis-accumulation argmax on one H×W plane: the column profile (sum over
/// rows) gives x, the row profile (sum over columns) gives y. Ties resolve to
/// the smallest index. Confidence is the plane maximum clamped to [0,1].
ChannelPeak peak_from_plane(std::span<const float> plane, int h, int w);

/// Per-channel peaks of a (1,2,H,W) heatmap; channel 0 is OD, channel 1 fovea.
LandmarkEstimate coords_from_heatmap(const Tensor& heatmap);

struct DistancePeaks {
  Coordinate first;
  Coordinate second;
  bool degenerate = false;
};

/// Global argmax, then argmax outside a disk of `radius` (default H/8) around
/// it. A constant map is degenerate and yields both peaks at the origin.
DistancePeaks peaks_from_distance_map(const Tensor& distance,
                                      std::optional<double> radius = std::nullopt);

struct OrderedLandmarks {
  Coordinate od;
  Coordinate fovea;
};

/// Assigns the unordered distance-map peaks to the detector's (OD, fovea) by
/// the assignment with minimal total Euclidean distance. Ties keep
/// od <- first peak.
OrderedLandmarks pair_consistency(const LandmarkEstimate& detector, const DistancePeaks& peaks);

struct FallbackParams {
  /// Fallback fires when the fovea channel peak is below this.
  double threshold = 0.05;
  /// Horizontal OD-to-fovea displacement as a fraction of image width
  /// (2.5 assumed OD diameters of 0.12 W each).
  double horizontal_fraction = 0.3;
  /// Vertical displacement as a fraction of image height.
  double vertical_fraction = 0.0;
};

/// Fovea estimated from the OD position: shifted horizontally toward the image
/// center, then clamped into the frame.
Coordinate fovea_fallback(Coordinate od, int h, int w, const FallbackParams& params = {});

/// Replaces the fovea with the fallback estimate when its confidence is below
/// the threshold and records that it did.
void apply_fovea_fallback(LandmarkEstimate& est, int h, int w, const FallbackParams& params);

/// Arithmetic mean of the regression and heatmap estimates.
Coordinate ensemble_coords(Coordinate regression, Coordinate heatmap);

}  // namespace joined::extraction
