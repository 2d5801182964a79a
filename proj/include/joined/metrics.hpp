#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "joined/types.hpp"

namespace joined::metrics {

/// Euclidean distance in pixels.
double aed(Coordinate pred, Coordinate gt);

/// Which structure to score: OD is the whole disc (OD rim plus cup).
enum class Structure { OD, OC };

/// 2|A∩B| / (|A|+|B|); 1 when both are empty.
double dice_score(const LabelMask& pred, const LabelMask& gt, Structure s);

/// Vertical cup extent over vertical disc extent, inclusive rows. Absent when
/// either structure is missing.
std::optional<double> vcdr(const LabelMask& mask);

/// One image's prediction as consumed by the evaluator.
struct Prediction {
  std::string image_id;
  LabelMask mask;
  std::optional<Coordinate> fovea;
  std::optional<Coordinate> od_center;
  std::optional<double> vcdr;
  bool fovea_via_fallback = false;
};

/// Ground truth per image.
struct GroundTruth {
  std::string image_id;
  std::optional<LabelMask> mask;
  std::optional<Coordinate> fovea;
  std::optional<Coordinate> od_center;
  bool oc_present = false;
};

struct ImageRecord {
  std::string image_id;
  std::optional<double> fovea_aed;
  std::optional<double> od_aed;
  std::optional<double> od_dice;
  std::optional<double> oc_dice;
  std::optional<double> vcdr_pred;
  std::optional<double> vcdr_gt;
  std::optional<double> abs_vcdr_err;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

struct EvalRecord {
  std::vector<ImageRecord> images;
  Summary fovea_aed, od_aed, od_dice, oc_dice, vcdr_mae;
  /// Per metric, images skipped because a required value was missing.
  std::map<std::string, std::size_t> skipped;
  std::vector<std::string> unmatched_predictions;
  std::vector<std::string> unmatched_ground_truth;
  /// False when no ground-truth image carries a cup annotation.
  bool has_oc = true;
};

/// Scores predictions against ground truth, matched by image id. Dice values
/// are fractions in [0,1]; the rendered table shows percentages.
EvalRecord evaluate(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts);

/// Population mean and standard deviation.
Summary summarize(const std::vector<double>& values);

/// Markdown table with one "mean ± std" row; OC columns dropped when the
/// ground truth has no cup annotations.
std::string render_table(const EvalRecord& r, const std::string& method = "JOINED");

/// Per-image CSV report.
std::string render_csv(const EvalRecord& r);

}  // namespace joined::metrics
