#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "joined/augment.hpp"
#include "joined/extraction.hpp"
#include "joined/losses.hpp"
#include "joined/nn/networks.hpp"

namespace joined::config {

enum class ConsistencyBackprop { Both, Detector, None };

const char* to_string(ConsistencyBackprop c);

struct BackboneConfig {
  int base_width = 32;
  int depth = 5;
  int decoder_width = 256;
};

struct CoarseConfig {
  int input_size = 256;
  int epochs = 300;
  double lr = 2e-4;
  int batch_size = 4;
  losses::LossWeights weights;
  /// Heatmap sigma = input height / sigma_divisor.
  double sigma_divisor = 100.0;
  BackboneConfig backbone;
  bool bridge = true;
  nn::SegActivation seg_activation = nn::SegActivation::Sigmoid;
  bool predictor = true;
  bool detector = true;
  bool segmentor = true;
  /// Where the gradient of the coordinate-consistency term flows.
  ConsistencyBackprop consistency_backprop = ConsistencyBackprop::Both;
  bool augment = true;
  std::string pretrained_encoder;

  losses::BranchSet enabled() const;
  nn::JsdmSpec spec() const;
};

struct FineSegConfig {
  int crop_size = 448;
  int epochs = 300;
  double lr = 2e-4;
  int batch_size = 4;
  BackboneConfig backbone;
  nn::SegActivation seg_activation = nn::SegActivation::Sigmoid;
  /// Train on ground-truth-centered crops instead of coarse-centered ones.
  bool teacher_forcing = true;
  int jitter = 16;
  bool augment = true;

  nn::FsmSpec spec() const;
};

struct FineLocConfig {
  int crop_size = 128;
  int epochs = 300;
  double lr = 2e-4;
  int batch_size = 4;
  BackboneConfig backbone;
  int hidden = 64;
  /// Crop heatmap sigma = crop size / sigma_divisor.
  double sigma_divisor = 100.0;
  bool teacher_forcing = true;
  int jitter = 16;
  bool augment = true;

  nn::FlmSpec spec() const;
};

struct InferenceConfig {
  extraction::FallbackParams fallback;
  /// Peak suppression radius as a fraction of the map height.
  double peak_radius = 0.125;
  double fov_floor = 0.04;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string device = "cpu";
  bool deterministic = true;
  std::string data_dir = "data";
  std::string out_dir = "runs";
  CoarseConfig coarse;
  FineSegConfig fine_seg;
  FineLocConfig fine_loc;
  InferenceConfig inference;
  augment::AugmentPolicy augment;

  /// Cross-field checks; throws ConfigError naming the key.
  void validate() const;
};

/// Parses `[section]` headers and `key = value` lines; `#` starts a comment.
/// Unknown keys and malformed values throw ConfigError naming the key.
void apply_text(RunConfig& cfg, const std::string& text, const std::string& origin = "config");
RunConfig load(const std::filesystem::path& file);

/// Sets one dotted key such as "coarse.epochs".
void set(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get(const RunConfig& cfg, const std::string& key);
std::vector<std::string> keys();

/// Every key with its resolved value, in the same format `apply_text` reads.
std::string render(const RunConfig& cfg);

}  // namespace joined::config
