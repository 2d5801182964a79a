#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "joined/config.hpp"
#include "joined/extraction.hpp"
#include "joined/geometry.hpp"
#include "joined/losses.hpp"
#include "joined/metrics.hpp"
#include "joined/nn/networks.hpp"
#include "joined/preprocess.hpp"
#include "joined/targets.hpp"
#include "joined/types.hpp"

namespace joined::pipeline {

/// Independent RNG stream for (seed, a, b, c), e.g. (seed, epoch, sample).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0);

/// Label mask from a (1,3,H,W) (OC, OD rim, background) probability map:
/// OC where P_OC > 0.5, else OD where P_OD > 0.5, else background.
LabelMask threshold_seg(const Tensor& probs, double level = 0.5);

// ---------------------------------------------------------------------------
// Coarse stage

/// A sample in the coarse network frame with its targets.
struct CoarseItem {
  std::string image_id;
  Tensor image;  // (1,3,S,S)
  std::optional<LabelMask> mask;
  LandmarkAnnotation landmarks;
};

/// Preprocesses a sample into the coarse network frame.
CoarseItem prepare_coarse(const FundusSample& s, int size, double fov_floor = 0.04);

struct CoarseTargets {
  targets::DistanceMap distance;
  targets::DetectionTarget detection;
  std::optional<Tensor> onehot;  // (1,3,S,S) when a mask exists
};

CoarseTargets make_coarse_targets(const CoarseItem& item, double sigma);

struct EpochLog {
  int epoch = 0;
  losses::JsdmLossReport report;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Loss terms and output gradients of one coarse batch.
struct CoarseBatchLoss {
  losses::JsdmLossReport report;
  nn::JsdmOutputs<float> grads;
};

/// Evaluates the scheduled objective on network outputs for a batch; gradients
/// are filled for active branches only.
CoarseBatchLoss coarse_loss(const nn::JsdmOutputs<float>& out,
                            const std::vector<CoarseTargets>& targets, losses::BranchSet active,
                            const config::CoarseConfig& cfg, double peak_radius);

/// Trains the coarse network with the progressive schedule. One log entry per
/// epoch holds the mean batch terms. A non-finite loss throws naming the
/// epoch and batch.
std::vector<EpochLog> train_coarse(nn::JsdmNet<float>& net, const std::vector<FundusSample>& data,
                                   const config::RunConfig& cfg, const EpochCallback& cb = {});

/// Coarse outputs for one image.
struct CoarseResult {
  preprocess::Preprocessed pre;
  Tensor distance;  // (1,1,S,S), empty when the Predictor is disabled
  Tensor heatmap;   // (1,2,S,S), empty when the Detector is disabled
  Tensor seg;       // (1,3,S,S), empty when the Segmentor is disabled
  LabelMask mask;   // network frame, all background without a Segmentor
  /// Landmarks in the network frame and in the original frame.
  extraction::LandmarkEstimate net_estimate;
  extraction::LandmarkEstimate estimate;
  /// Distance-map landmarks after pairing, network frame.
  std::optional<extraction::OrderedLandmarks> distance_landmarks;
  /// No usable OD location: neither a confident OD heatmap peak nor a
  /// non-constant distance map.
  bool od_degenerate = false;
};

CoarseResult run_coarse(nn::JsdmNet<float>& net, const Tensor& image,
                        const config::RunConfig& cfg);

/// Coarse landmarks from raw network-frame outputs (either map may be empty).
struct CoarseLandmarks {
  extraction::LandmarkEstimate estimate;
  std::optional<extraction::OrderedLandmarks> distance_landmarks;
  bool od_degenerate = false;
};
CoarseLandmarks coarse_landmarks(const Tensor& distance, const Tensor& heatmap,
                                 const config::InferenceConfig& cfg);

/// Resamples a network-frame map onto the original frame.
Tensor to_original(const Tensor& map, const CoarseResult& coarse);
LabelMask to_original(const LabelMask& mask, const CoarseResult& coarse);

// ---------------------------------------------------------------------------
// Fine stages

/// OD-centered segmentation crop window; center crop when the OD is degenerate.
geometry::RoiBox seg_roi(const CoarseResult& coarse, int crop_size, int h, int w);

/// (1,4,K,K): RGB crop plus the coarse mask (OC 1, OD 0.5, background 0).
Tensor fsm_input(const Tensor& image, const LabelMask& coarse_mask_original,
                 const geometry::RoiBox& box);

/// (1,6,K,K): RGB crop, distance map and both heatmap channels.
Tensor flm_input(const Tensor& image, const Tensor& distance_original,
                 const Tensor& heatmap_original, const geometry::RoiBox& box);

/// Full-frame label mask from the fine segmenter.
LabelMask run_fine_seg(nn::FsmNet<float>& fsm, const Tensor& image, const CoarseResult& coarse,
                       const config::RunConfig& cfg);

struct FineLocResult {
  Coordinate fovea;  // original frame
  Coordinate regression;
  Coordinate heatmap;
  geometry::RoiBox box;
};

FineLocResult run_fine_loc(nn::FlmNet<float>& flm, const Tensor& image,
                           const CoarseResult& coarse, const config::RunConfig& cfg);

/// Fine-stage training material derived once from the trained coarse model.
struct FineContext {
  std::vector<CoarseResult> coarse;
  std::vector<LabelMask> coarse_masks;  // original frame
  std::vector<Tensor> distances;        // original frame
  std::vector<Tensor> heatmaps;         // original frame
};

FineContext fine_context(nn::JsdmNet<float>& coarse, const std::vector<FundusSample>& data,
                         const config::RunConfig& cfg);

/// Per-epoch mean loss of a fine stage.
struct FineEpochLog {
  int epoch = 0;
  double loss = 0.0;
};
using FineCallback = std::function<void(const FineEpochLog&)>;

std::vector<FineEpochLog> train_fine_seg(nn::FsmNet<float>& fsm,
                                         const std::vector<FundusSample>& data,
                                         const FineContext& ctx, const config::RunConfig& cfg,
                                         const FineCallback& cb = {});

std::vector<FineEpochLog> train_fine_loc(nn::FlmNet<float>& flm,
                                         const std::vector<FundusSample>& data,
                                         const FineContext& ctx, const config::RunConfig& cfg,
                                         const FineCallback& cb = {});

/// Loss of a trained fine segmenter on the unaugmented, unjittered crops.
double fine_seg_loss(nn::FsmNet<float>& fsm, const std::vector<FundusSample>& data,
                     const FineContext& ctx, const config::RunConfig& cfg);

// ---------------------------------------------------------------------------
// End to end

struct Models {
  nn::JsdmNet<float>* coarse = nullptr;
  nn::FsmNet<float>* fine_seg = nullptr;  // optional
  nn::FlmNet<float>* fine_loc = nullptr;  // optional
};

/// Coarse stage, then whichever fine stages are present. Without a fine
/// segmenter the coarse mask is brought back to the original frame; without a
/// fine localizer the coarse fovea is reported.
metrics::Prediction infer(const Models& models, const FundusSample& sample,
                          const config::RunConfig& cfg);

std::vector<metrics::Prediction> infer_all(const Models& models,
                                           const std::vector<FundusSample>& data,
                                           const config::RunConfig& cfg);

}  // namespace joined::pipeline
