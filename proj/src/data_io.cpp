#include "joined/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"
#include "joined/targets.hpp"

namespace joined::data_io {

using nlohmann::json;

MaskEncoding MaskEncoding::standard() {
  MaskEncoding e;
  e.set(0, Label::OC);
  e.set(128, Label::OD);
  e.set(255, Label::Background);
  return e;
}

MaskEncoding MaskEncoding::from_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(file.string() + ": " + e.what());
  }
  MaskEncoding enc;
  for (const auto& [key, value] : j.items()) {
    const int v = std::stoi(key);
    if (v < 0 || v > 255) throw InputError(file.string() + ": mask value out of range: " + key);
    const auto name = value.get<std::string>();
    if (name == "OC") enc.set(static_cast<std::uint8_t>(v), Label::OC);
    else if (name == "OD") enc.set(static_cast<std::uint8_t>(v), Label::OD);
    else if (name == "background") enc.set(static_cast<std::uint8_t>(v), Label::Background);
    else throw InputError(file.string() + ": unknown label '" + name + "' for value " + key);
  }
  return enc;
}

std::optional<Label> MaskEncoding::decode(std::uint8_t value) const {
  auto it = table_.find(value);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::uint8_t MaskEncoding::encode(Label l) const {
  for (const auto& [v, label] : table_) {
    if (label == l) return v;
  }
  throw std::invalid_argument(std::string("mask encoding has no value for ") + label_name(l));
}

// ---------------------------------------------------------------------------

Tensor read_image(const fs::path& file) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw InputError("cannot decode image " + file.string());
  Tensor t(1, 3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      t(0, 0, y, x) = row[x][2] / 255.0f;
      t(0, 1, y, x) = row[x][1] / 255.0f;
      t(0, 2, y, x) = row[x][0] / 255.0f;
    }
  }
  return t;
}

void write_image(const fs::path& file, const Tensor& image) {
  cv::Mat bgr(image.h(), image.w(), CV_8UC3);
  for (int y = 0; y < image.h(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.w(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image(0, c, y, x), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  if (!cv::imwrite(file.string(), bgr)) throw std::runtime_error("cannot write " + file.string());
}

LabelMask read_mask(const fs::path& file, const MaskEncoding& enc) {
  cv::Mat gray = cv::imread(file.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw InputError("cannot decode mask " + file.string());
  LabelMask m(gray.rows, gray.cols);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) {
      const auto label = enc.decode(row[x]);
      if (!label) {
        throw InputError(file.string() + ": mask value " + std::to_string(row[x]) + " at (" +
                         std::to_string(x) + "," + std::to_string(y) +
                         ") is not in the mask encoding");
      }
      m(y, x) = *label;
    }
  }
  return m;
}

void write_mask(const fs::path& file, const LabelMask& mask, const MaskEncoding& enc) {
  cv::Mat gray(mask.h(), mask.w(), CV_8UC1);
  const std::uint8_t values[3] = {enc.encode(Label::Background), enc.encode(Label::OD),
                                  enc.encode(Label::OC)};
  for (int y = 0; y < mask.h(); ++y) {
    auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.w(); ++x) row[x] = values[static_cast<int>(mask(y, x))];
  }
  if (!cv::imwrite(file.string(), gray)) throw std::runtime_error("cannot write " + file.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::map<std::string, std::optional<Coordinate>> read_annotations(const fs::path& csv) {
  std::map<std::string, std::optional<Coordinate>> out;
  std::ifstream in(csv);
  if (!in) return out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (lineno == 1) {
      if (f.size() < 3 || trim(f[0]) != "image_id" || trim(f[1]) != "fovea_x" ||
          trim(f[2]) != "fovea_y") {
        throw InputError(csv.string() + ":1: expected header image_id,fovea_x,fovea_y");
      }
      continue;
    }
    if (f.size() < 3) f.resize(3);
    const std::string id = trim(f[0]);
    const std::string xs = trim(f[1]), ys = trim(f[2]);
    if (xs.empty() || ys.empty()) {
      out[id] = std::nullopt;
      continue;
    }
    try {
      out[id] = Coordinate{std::stod(xs), std::stod(ys)};
    } catch (const std::exception&) {
      throw InputError(csv.string() + ":" + std::to_string(lineno) + ": bad coordinate");
    }
  }
  return out;
}

void write_annotations(const fs::path& csv,
                       const std::vector<std::pair<std::string, std::optional<Coordinate>>>& rows) {
  std::ofstream out(csv);
  out << "image_id,fovea_x,fovea_y\n";
  for (const auto& [id, c] : rows) {
    out << id << ",";
    if (c) out << format_number(c->x) << "," << format_number(c->y);
    else out << ",";
    out << "\n";
  }
}

DatasetManifest scan_dataset(const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  if (!fs::is_directory(root / "images")) {
    throw InputError("dataset " + root.string() + ": missing images/ directory");
  }
  if (fs::exists(root / "mask_encoding.json")) {
    m.mask_encoding = MaskEncoding::from_json_file(root / "mask_encoding.json");
  }
  const auto annotations = read_annotations(root / "annotations.csv");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(root / "images")) {
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    ManifestEntry e;
    e.image_id = f.stem().string();
    e.image_file = f;
    const auto mask = root / "masks" / (e.image_id + ".png");
    if (fs::exists(mask)) e.mask_file = mask;
    if (auto it = annotations.find(e.image_id); it != annotations.end()) e.fovea = it->second;
    m.entries.push_back(std::move(e));
  }
  return m;
}

void validate(const DatasetManifest& m) {
  for (const auto& e : m.entries) {
    if (!fs::exists(e.image_file)) throw InputError("missing image " + e.image_file.string());
    if (e.mask_file && !fs::exists(*e.mask_file)) {
      throw InputError("missing mask " + e.mask_file->string());
    }
  }
}

FundusSample load_sample(const DatasetManifest& m, const ManifestEntry& e) {
  FundusSample s;
  s.image_id = e.image_id;
  s.image = read_image(e.image_file);
  if (e.mask_file) {
    s.mask = read_mask(*e.mask_file, m.mask_encoding);
    if (s.mask->h() != s.h() || s.mask->w() != s.w()) {
      throw InputError(e.mask_file->string() + ": mask extent differs from image");
    }
    s.oc_present = s.mask->count(Label::OC) > 0;
    s.landmarks.od_center = targets::od_center_from_mask(*s.mask);
  } else {
    s.landmarks.od_center = e.od;
  }
  s.landmarks.fovea = e.fovea;
  for (const auto& c : {s.landmarks.od_center, s.landmarks.fovea}) {
    if (c && (c->x < 0 || c->y < 0 || c->x > s.w() - 1 || c->y > s.h() - 1)) {
      throw InputError(e.image_id + ": annotated coordinate outside the image");
    }
  }
  return s;
}

std::vector<FundusSample> load_dataset(const DatasetManifest& m) {
  validate(m);
  std::vector<FundusSample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(load_sample(m, e));
  return out;
}

void save_sample(const fs::path& root, const FundusSample& s) {
  fs::create_directories(root / "images");
  write_image(root / "images" / (s.image_id + ".png"), s.image);
  if (s.mask) {
    fs::create_directories(root / "masks");
    write_mask(root / "masks" / (s.image_id + ".png"), *s.mask);
  }
  auto rows_map = read_annotations(root / "annotations.csv");
  rows_map[s.image_id] = s.landmarks.fovea;
  std::vector<std::pair<std::string, std::optional<Coordinate>>> rows(rows_map.begin(),
                                                                      rows_map.end());
  write_annotations(root / "annotations.csv", rows);
}

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw InputError("JND1: truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_jnd(const fs::path& file, const Tensor& t) {
  if (t.n() != 1) throw std::invalid_argument("write_jnd: expected a single sample");
  std::ofstream out(file, std::ios::binary);
  out.write("JND1", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(t.h()));
  put_u32(out, static_cast<std::uint32_t>(t.w()));
  put_u32(out, static_cast<std::uint32_t>(t.c()));
  for (float v : t.values()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  }
  if (!out) throw std::runtime_error("cannot write " + file.string());
}

Tensor read_jnd(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open " + file.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "JND1") {
    throw InputError(file.string() + ": bad magic");
  }
  if (get_u32(in) != 1) throw InputError(file.string() + ": unsupported dtype");
  const auto h = static_cast<int>(get_u32(in));
  const auto w = static_cast<int>(get_u32(in));
  const auto c = static_cast<int>(get_u32(in));
  Tensor t(1, c, h, w);
  for (auto& v : t.values()) {
    const std::uint32_t bits = get_u32(in);
    std::memcpy(&v, &bits, 4);
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

json coord_json(const std::optional<Coordinate>& c) {
  if (!c) return nullptr;
  return json::array({c->x, c->y});
}

std::optional<Coordinate> coord_field(const json& j, const char* field, const fs::path& file) {
  if (!j.contains(field)) throw InputError(file.string() + ": missing field '" + field + "'");
  const auto& v = j.at(field);
  if (v.is_null()) return std::nullopt;
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw InputError(file.string() + ": field '" + field + "' must be [x, y] or null");
  }
  return Coordinate{v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

void save_prediction(const fs::path& dir, const metrics::Prediction& p) {
  fs::create_directories(dir);
  write_mask(dir / (p.image_id + ".png"), p.mask);
  json j = {{"image_id", p.image_id},
            {"fovea_xy", coord_json(p.fovea)},
            {"od_center_xy", coord_json(p.od_center)},
            {"vcdr", p.vcdr ? json(*p.vcdr) : json(nullptr)},
            {"fovea_via_fallback", p.fovea_via_fallback}};
  std::ofstream(dir / (p.image_id + ".json")) << j.dump(2) << "\n";
}

void save_predictions(const fs::path& dir, const std::vector<metrics::Prediction>& ps) {
  for (const auto& p : ps) save_prediction(dir, p);
}

metrics::Prediction load_prediction(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(file.string() + ": " + e.what());
  }
  if (!j.is_object()) throw InputError(file.string() + ": expected a JSON object");
  metrics::Prediction p;
  if (!j.contains("image_id") || !j["image_id"].is_string()) {
    throw InputError(file.string() + ": field 'image_id' must be a string");
  }
  p.image_id = j["image_id"].get<std::string>();
  p.fovea = coord_field(j, "fovea_xy", file);
  p.od_center = coord_field(j, "od_center_xy", file);
  if (!j.contains("vcdr")) throw InputError(file.string() + ": missing field 'vcdr'");
  if (!j["vcdr"].is_null()) {
    if (!j["vcdr"].is_number()) throw InputError(file.string() + ": field 'vcdr' must be a number or null");
    p.vcdr = j["vcdr"].get<double>();
  }
  if (!j.contains("fovea_via_fallback") || !j["fovea_via_fallback"].is_boolean()) {
    throw InputError(file.string() + ": field 'fovea_via_fallback' must be a boolean");
  }
  p.fovea_via_fallback = j["fovea_via_fallback"].get<bool>();
  const fs::path mask = file.parent_path() / (p.image_id + ".png");
  if (fs::exists(mask)) p.mask = read_mask(mask, MaskEncoding::standard());
  return p;
}

std::vector<metrics::Prediction> load_predictions(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("prediction directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<metrics::Prediction> out;
  for (const auto& f : files) out.push_back(load_prediction(f));
  return out;
}

std::vector<metrics::GroundTruth> ground_truth(const std::vector<FundusSample>& samples) {
  std::vector<metrics::GroundTruth> out;
  for (const auto& s : samples) {
    out.push_back({s.image_id, s.mask, s.landmarks.fovea, s.landmarks.od_center, s.oc_present});
  }
  return out;
}

// ---------------------------------------------------------------------------

SyntheticImage make_synthetic(const SyntheticSpec& spec, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x6a6f696eu};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int n = spec.size;
  const double c0 = (n - 1) / 2.0;
  const double fov_r = spec.fov_radius_frac * n;
  const bool od_left = unit(rng) < 0.5;

  SyntheticTruth t;
  char id[32];
  std::snprintf(id, sizeof(id), "syn_%04d", index);
  t.image_id = id;
  t.od_ry = uni(spec.od_radius_min, spec.od_radius_max) * n;
  t.od_rx = t.od_ry * uni(0.88, 1.0);
  const double odx = n * uni(0.27, 0.33);
  t.od_ellipse_center = {od_left ? odx : n - 1 - odx, n * uni(0.42, 0.58)};
  t.cup_ratio = uni(spec.cdr_min, spec.cdr_max);
  const double cup_ry = t.cup_ratio * t.od_ry;
  const double cup_rx = t.cup_ratio * t.od_rx * uni(0.9, 1.0);
  const double offset = uni(spec.fovea_offset_min, spec.fovea_offset_max) * 2.0 * t.od_ry;
  t.fovea = {t.od_ellipse_center.x + (od_left ? offset : -offset),
             t.od_ellipse_center.y + uni(-0.02, 0.02) * n};
  const double fovea_sigma = 0.6 * t.od_ry;

  // Vessels: arcs leaving the disc.
  cv::Mat vessels = cv::Mat::zeros(n, n, CV_8UC1);
  for (int v = 0; v < spec.vessels; ++v) {
    const double a0 = uni(0, 2 * M_PI);
    const double bend = uni(-0.012, 0.012);
    const int thickness = unit(rng) < 0.5 ? 1 : 2;
    std::vector<cv::Point> pts;
    double a = a0;
    for (int k = 0; k < 40; ++k) {
      const double r = k * n / 60.0;
      a += bend;
      pts.emplace_back(static_cast<int>(std::lround(t.od_ellipse_center.x + r * std::cos(a))),
                       static_cast<int>(std::lround(t.od_ellipse_center.y + r * std::sin(a))));
    }
    cv::polylines(vessels, pts, false, cv::Scalar(255), thickness, cv::LINE_8);
  }

  std::normal_distribution<double> noise(0.0, spec.noise);
  FundusSample s;
  s.image_id = t.image_id;
  s.image = Tensor(1, 3, n, n);
  s.mask = LabelMask(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double rr = std::hypot(x - c0, y - c0);
      if (rr > fov_r) continue;
      const double vignette = 1.0 - 0.35 * (rr / fov_r) * (rr / fov_r);
      double px[3] = {0.78 * vignette, 0.36 * vignette, 0.16 * vignette};
      const double fd2 = (x - t.fovea.x) * (x - t.fovea.x) + (y - t.fovea.y) * (y - t.fovea.y);
      const double dark = 1.0 - 0.5 * std::exp(-fd2 / (2 * fovea_sigma * fovea_sigma));
      for (double& p : px) p *= dark;
      if (vessels.at<std::uint8_t>(y, x)) {
        px[0] *= 0.6;
        px[1] *= 0.45;
        px[2] *= 0.45;
      }
      const double ex = (x - t.od_ellipse_center.x), ey = (y - t.od_ellipse_center.y);
      const double disc = (ex / t.od_rx) * (ex / t.od_rx) + (ey / t.od_ry) * (ey / t.od_ry);
      const double cup = (ex / cup_rx) * (ex / cup_rx) + (ey / cup_ry) * (ey / cup_ry);
      if (cup <= 1.0) {
        px[0] = 0.98, px[1] = 0.92, px[2] = 0.72;
        (*s.mask)(y, x) = Label::OC;
      } else if (disc <= 1.0) {
        px[0] = 0.92, px[1] = 0.72, px[2] = 0.40;
        (*s.mask)(y, x) = Label::OD;
      }
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(px[c] + noise(rng), 0.05, 1.0);
        s.image(0, c, y, x) = static_cast<float>(std::lround(v * 255.0) / 255.0);
      }
    }
  }
  s.oc_present = s.mask->count(Label::OC) > 0;
  s.landmarks.od_center = targets::od_center_from_mask(*s.mask);
  s.landmarks.fovea = t.fovea;
  return {std::move(s), t};
}

std::vector<SyntheticTruth> generate_synthetic(const SyntheticSpec& spec, int n,
                                               const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::vector<SyntheticTruth> truths;
  std::vector<std::pair<std::string, std::optional<Coordinate>>> rows;
  for (int i = 0; i < n; ++i) {
    auto img = make_synthetic(spec, i);
    write_image(root / "images" / (img.sample.image_id + ".png"), img.sample.image);
    write_mask(root / "masks" / (img.sample.image_id + ".png"), *img.sample.mask);
    rows.emplace_back(img.sample.image_id, img.sample.landmarks.fovea);
    truths.push_back(img.truth);
  }
  write_annotations(root / "annotations.csv", rows);
  std::ofstream out(root / "synthetic_truth.csv");
  out << "image_id,od_x,od_y,od_rx,od_ry,cup_ratio,fovea_x,fovea_y\n";
  for (const auto& t : truths) {
    out << t.image_id << "," << format_number(t.od_ellipse_center.x) << ","
        << format_number(t.od_ellipse_center.y) << "," << format_number(t.od_rx) << ","
        << format_number(t.od_ry) << "," << format_number(t.cup_ratio) << ","
        << format_number(t.fovea.x) << "," << format_number(t.fovea.y) << "\n";
  }
  return truths;
}

}  // namespace joined::data_io
