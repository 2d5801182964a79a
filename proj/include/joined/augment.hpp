#pragma once

#include <optional>
#include <random>

#include "joined/geometry.hpp"
#include "joined/tensor.hpp"
#include "joined/types.hpp"

namespace joined::augment {

/// Ranges are symmetric magnitudes: a factor is drawn from [-m, m].
struct AugmentPolicy {
  double brightness = 0.1;
  double contrast = 0.1;
  double saturation = 0.1;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double rotation_prob = 0.5;
  double rotation_max_deg = 15.0;
  double gamma = 0.2;
  double scale_min = 1.0 / 1.1;
  double scale_max = 1.1;

  /// Policy that leaves every sample untouched.
  static AugmentPolicy none();
};

/// One concrete draw from a policy.
struct AugmentDraw {
  bool hflip = false;
  bool vflip = false;
  double angle_rad = 0.0;
  double scale = 1.0;
  double brightness = 0.0;
  double contrast = 0.0;
  double saturation = 0.0;
  double gamma = 0.0;

  /// Geometric part as a map of the h×w frame onto itself (about its center).
  geometry::Affine geometric(int h, int w) const;
};

AugmentDraw draw(const AugmentPolicy& policy, std::mt19937_64& rng);

/// Network-frame training sample. Optional members are transformed when set.
struct AugmentSample {
  Tensor image;                   // (1,3,H,W)
  std::optional<LabelMask> mask;
  LandmarkAnnotation landmarks;
  std::optional<Tensor> distance;  // (1,1,H,W)
  std::optional<Tensor> heatmap;   // (1,2,H,W)
};

/// Geometric ops move image, mask, maps and landmarks with one affine map
/// (landmarks leaving the frame become absent); photometric ops touch the
/// image only.
AugmentSample apply(const AugmentDraw& d, AugmentSample sample);

AugmentSample augment(AugmentSample sample, const AugmentPolicy& policy, std::mt19937_64& rng);

}  // namespace joined::augment
