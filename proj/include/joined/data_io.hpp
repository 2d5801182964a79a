#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "joined/metrics.hpp"
#include "joined/tensor.hpp"
#include "joined/types.hpp"

namespace joined::data_io {

namespace fs = std::filesystem;

/// Grayscale mask value -> label. Every value found in a mask must be listed.
class MaskEncoding {
 public:
  /// 0 -> OC, 128 -> OD, 255 -> background.
  static MaskEncoding standard();
  static MaskEncoding from_json_file(const fs::path& file);

  void set(std::uint8_t value, Label label) { table_[value] = label; }
  std::optional<Label> decode(std::uint8_t value) const;
  std::uint8_t encode(Label l) const;
  const std::map<std::uint8_t, Label>& table() const { return table_; }

 private:
  std::map<std::uint8_t, Label> table_;
};

struct ManifestEntry {
  std::string image_id;
  fs::path image_file;
  std::optional<fs::path> mask_file;
  std::optional<Coordinate> fovea;
  std::optional<Coordinate> od;
};

/// Folder convention: images/<id>.png, optional masks/<id>.png,
/// annotations.csv (image_id,fovea_x,fovea_y), optional mask_encoding.json.
struct DatasetManifest {
  fs::path root;
  std::vector<ManifestEntry> entries;
  MaskEncoding mask_encoding = MaskEncoding::standard();
};

DatasetManifest scan_dataset(const fs::path& root);

/// Throws InputError when a referenced file is missing.
void validate(const DatasetManifest& m);

/// Decodes every entry. Unknown mask values are a hard error naming the file;
/// entries without an annotation row have no fovea. The OD center always comes
/// from the mask.
std::vector<FundusSample> load_dataset(const DatasetManifest& m);
FundusSample load_sample(const DatasetManifest& m, const ManifestEntry& e);

// Image codecs -------------------------------------------------------------

/// RGB PNG/JPEG as (1,3,H,W) in [0,1].
Tensor read_image(const fs::path& file);
void write_image(const fs::path& file, const Tensor& image);
LabelMask read_mask(const fs::path& file, const MaskEncoding& enc);
void write_mask(const fs::path& file, const LabelMask& mask,
                const MaskEncoding& enc = MaskEncoding::standard());

/// Fovea coordinates by image id; empty fields mean absent.
std::map<std::string, std::optional<Coordinate>> read_annotations(const fs::path& csv);
void write_annotations(const fs::path& csv,
                       const std::vector<std::pair<std::string, std::optional<Coordinate>>>& rows);

/// Lossless sample persistence: PNG image and mask plus an annotations row.
void save_sample(const fs::path& root, const FundusSample& s);

// Binary target cache ------------------------------------------------------

/// "JND1" | dtype u32 (1 = float32) | H u32 | W u32 | C u32 | C*H*W float32, all
/// little-endian. Stores a (1,C,H,W) tensor.
void write_jnd(const fs::path& file, const Tensor& t);
Tensor read_jnd(const fs::path& file);

// Predictions ----------------------------------------------------------------

/// <id>.png label mask plus <id>.json
/// {image_id, fovea_xy, od_center_xy, vcdr, fovea_via_fallback}.
void save_prediction(const fs::path& dir, const metrics::Prediction& p);
void save_predictions(const fs::path& dir, const std::vector<metrics::Prediction>& ps);
/// Validates the JSON schema; violations throw InputError naming file and field.
metrics::Prediction load_prediction(const fs::path& json_file);
std::vector<metrics::Prediction> load_predictions(const fs::path& dir);

/// Ground truth view of a dataset for the evaluator.
std::vector<metrics::GroundTruth> ground_truth(const std::vector<FundusSample>& samples);

// Synthetic fundus images ----------------------------------------------------

struct SyntheticSpec {
  int size = 256;
  double fov_radius_frac = 0.47;
  double od_radius_min = 0.06;  // vertical OD radius as a fraction of size
  double od_radius_max = 0.075;
  double cdr_min = 0.3;
  double cdr_max = 0.8;
  double fovea_offset_min = 2.0;  // in OD diameters, toward the temporal side
  double fovea_offset_max = 3.0;
  int vessels = 6;
  double noise = 0.02;
  std::uint64_t seed = 0;
};

/// Exact draw behind one synthetic image.
struct SyntheticTruth {
  std::string image_id;
  Coordinate od_ellipse_center;
  double od_rx = 0, od_ry = 0;
  double cup_ratio = 0;
  Coordinate fovea;
};

struct SyntheticImage {
  FundusSample sample;
  SyntheticTruth truth;
};

/// Image `index` of the stream defined by spec.seed; independent of other
/// indices.
SyntheticImage make_synthetic(const SyntheticSpec& spec, int index);

/// Writes images/, masks/, annotations.csv and synthetic_truth.csv.
std::vector<SyntheticTruth> generate_synthetic(const SyntheticSpec& spec, int n,
                                               const fs::path& root);

}  // namespace joined::data_io
