#include "joined/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace joined::config {

const char* to_string(ConsistencyBackprop c) {
  switch (c) {
    case ConsistencyBackprop::Both: return "both";
    case ConsistencyBackprop::Detector: return "detector";
    case ConsistencyBackprop::None: return "none";
  }
  return "?";
}

losses::BranchSet CoarseConfig::enabled() const {
  losses::BranchSet s;
  if (predictor) s.insert(losses::Branch::Predictor);
  if (detector) s.insert(losses::Branch::Detector);
  if (segmentor) s.insert(losses::Branch::Segmentor);
  return s;
}

nn::JsdmSpec CoarseConfig::spec() const {
  nn::JsdmSpec s;
  s.encoder = {3, backbone.depth, backbone.base_width};
  s.decoder = {backbone.decoder_width};
  s.bridge = bridge;
  s.seg_activation = seg_activation;
  s.enabled = enabled();
  s.input_size = input_size;
  return s;
}

nn::FsmSpec FineSegConfig::spec() const {
  nn::FsmSpec s;
  s.encoder = {4, backbone.depth, backbone.base_width};
  s.decoder = {backbone.decoder_width};
  s.seg_activation = seg_activation;
  s.input_size = crop_size;
  return s;
}

nn::FlmSpec FineLocConfig::spec() const {
  nn::FlmSpec s;
  s.encoder = {6, backbone.depth, backbone.base_width};
  s.decoder = {backbone.decoder_width};
  s.hidden = hidden;
  s.input_size = crop_size;
  return s;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError(key + ": expected " + expected + ", got '" + value + "'");
}

template <typename T>
T parse_integral(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  std::string s = os.str();
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
Field int_field(std::string key, Access acc) {
  return {key,
          [key, acc](RunConfig& c, const std::string& v) { acc(c) = parse_integral<int>(key, v); },
          [acc](const RunConfig& c) { return std::to_string(acc(c)); }};
}

template <typename Access>
Field double_field(std::string key, Access acc) {
  return {key, [key, acc](RunConfig& c, const std::string& v) { acc(c) = parse_double(key, v); },
          [acc](const RunConfig& c) { return fmt(acc(c)); }};
}

template <typename Access>
Field bool_field(std::string key, Access acc) {
  return {key, [key, acc](RunConfig& c, const std::string& v) { acc(c) = parse_bool(key, v); },
          [acc](const RunConfig& c) { return std::string(acc(c) ? "true" : "false"); }};
}

template <typename Access>
Field string_field(std::string key, Access acc) {
  return {key, [acc](RunConfig& c, const std::string& v) { acc(c) = v; },
          [acc](const RunConfig& c) { return quote(acc(c)); }};
}

template <typename Access>
Field activation_field(std::string key, Access acc) {
  return {key,
          [key, acc](RunConfig& c, const std::string& v) {
            if (v != "sigmoid" && v != "softmax") bad_value(key, v, "sigmoid or softmax");
            acc(c) = nn::seg_activation_from_string(v);
          },
          [acc](const RunConfig& c) { return quote(nn::to_string(acc(c))); }};
}

#define ACC(expr) [](auto& c) -> auto& { return c.expr; }

void backbone_fields(std::vector<Field>& f, const std::string& section,
                     BackboneConfig& (*acc)(RunConfig&),
                     const BackboneConfig& (*cacc)(const RunConfig&)) {
  auto make = [&](const char* name, int BackboneConfig::*m) {
    const std::string key = section + "." + name;
    f.push_back({key,
                 [key, acc, m](RunConfig& c, const std::string& v) {
                   acc(c).*m = parse_integral<int>(key, v);
                 },
                 [cacc, m](const RunConfig& c) { return std::to_string(cacc(c).*m); }});
  };
  make("base_width", &BackboneConfig::base_width);
  make("depth", &BackboneConfig::depth);
  make("decoder_width", &BackboneConfig::decoder_width);
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"general.seed",
                 [](RunConfig& c, const std::string& v) {
                   c.seed = parse_integral<std::uint64_t>("general.seed", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"general.device",
                 [](RunConfig& c, const std::string& v) {
                   if (v != "cpu" && v != "accelerator") {
                     bad_value("general.device", v, "cpu or accelerator");
                   }
                   c.device = v;
                 },
                 [](const RunConfig& c) { return quote(c.device); }});
    f.push_back(bool_field("general.deterministic", ACC(deterministic)));
    f.push_back(string_field("general.data_dir", ACC(data_dir)));
    f.push_back(string_field("general.out_dir", ACC(out_dir)));

    f.push_back(int_field("coarse.input_size", ACC(coarse.input_size)));
    f.push_back(int_field("coarse.epochs", ACC(coarse.epochs)));
    f.push_back(double_field("coarse.lr", ACC(coarse.lr)));
    f.push_back(int_field("coarse.batch_size", ACC(coarse.batch_size)));
    f.push_back(int_field("coarse.tau0", ACC(coarse.weights.tau0)));
    f.push_back(int_field("coarse.tau1", ACC(coarse.weights.tau1)));
    f.push_back(double_field("coarse.lambda0", ACC(coarse.weights.lambda0)));
    f.push_back(double_field("coarse.lambda1", ACC(coarse.weights.lambda1)));
    f.push_back(double_field("coarse.sigma_divisor", ACC(coarse.sigma_divisor)));
    backbone_fields(
        f, "coarse", [](RunConfig& c) -> BackboneConfig& { return c.coarse.backbone; },
        [](const RunConfig& c) -> const BackboneConfig& { return c.coarse.backbone; });
    f.push_back(bool_field("coarse.bridge", ACC(coarse.bridge)));
    f.push_back(activation_field("coarse.seg_activation", ACC(coarse.seg_activation)));
    f.push_back(bool_field("coarse.predictor", ACC(coarse.predictor)));
    f.push_back(bool_field("coarse.detector", ACC(coarse.detector)));
    f.push_back(bool_field("coarse.segmentor", ACC(coarse.segmentor)));
    f.push_back({"coarse.consistency_backprop",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "both") c.coarse.consistency_backprop = ConsistencyBackprop::Both;
                   else if (v == "detector")
                     c.coarse.consistency_backprop = ConsistencyBackprop::Detector;
                   else if (v == "none") c.coarse.consistency_backprop = ConsistencyBackprop::None;
                   else bad_value("coarse.consistency_backprop", v, "both, detector or none");
                 },
                 [](const RunConfig& c) { return quote(to_string(c.coarse.consistency_backprop)); }});
    f.push_back(bool_field("coarse.augment", ACC(coarse.augment)));
    f.push_back(string_field("coarse.pretrained_encoder", ACC(coarse.pretrained_encoder)));

    f.push_back(int_field("fine_seg.crop_size", ACC(fine_seg.crop_size)));
    f.push_back(int_field("fine_seg.epochs", ACC(fine_seg.epochs)));
    f.push_back(double_field("fine_seg.lr", ACC(fine_seg.lr)));
    f.push_back(int_field("fine_seg.batch_size", ACC(fine_seg.batch_size)));
    backbone_fields(
        f, "fine_seg", [](RunConfig& c) -> BackboneConfig& { return c.fine_seg.backbone; },
        [](const RunConfig& c) -> const BackboneConfig& { return c.fine_seg.backbone; });
    f.push_back(activation_field("fine_seg.seg_activation", ACC(fine_seg.seg_activation)));
    f.push_back(bool_field("fine_seg.teacher_forcing", ACC(fine_seg.teacher_forcing)));
    f.push_back(int_field("fine_seg.jitter", ACC(fine_seg.jitter)));
    f.push_back(bool_field("fine_seg.augment", ACC(fine_seg.augment)));

    f.push_back(int_field("fine_loc.crop_size", ACC(fine_loc.crop_size)));
    f.push_back(int_field("fine_loc.epochs", ACC(fine_loc.epochs)));
    f.push_back(double_field("fine_loc.lr", ACC(fine_loc.lr)));
    f.push_back(int_field("fine_loc.batch_size", ACC(fine_loc.batch_size)));
    backbone_fields(
        f, "fine_loc", [](RunConfig& c) -> BackboneConfig& { return c.fine_loc.backbone; },
        [](const RunConfig& c) -> const BackboneConfig& { return c.fine_loc.backbone; });
    f.push_back(int_field("fine_loc.hidden", ACC(fine_loc.hidden)));
    f.push_back(double_field("fine_loc.sigma_divisor", ACC(fine_loc.sigma_divisor)));
    f.push_back(bool_field("fine_loc.teacher_forcing", ACC(fine_loc.teacher_forcing)));
    f.push_back(int_field("fine_loc.jitter", ACC(fine_loc.jitter)));
    f.push_back(bool_field("fine_loc.augment", ACC(fine_loc.augment)));

    f.push_back(double_field("inference.fallback_threshold", ACC(inference.fallback.threshold)));
    f.push_back(double_field("inference.fallback_horizontal",
                             ACC(inference.fallback.horizontal_fraction)));
    f.push_back(double_field("inference.fallback_vertical",
                             ACC(inference.fallback.vertical_fraction)));
    f.push_back(double_field("inference.peak_radius", ACC(inference.peak_radius)));
    f.push_back(double_field("inference.fov_floor", ACC(inference.fov_floor)));

    f.push_back(double_field("augment.brightness", ACC(augment.brightness)));
    f.push_back(double_field("augment.contrast", ACC(augment.contrast)));
    f.push_back(double_field("augment.saturation", ACC(augment.saturation)));
    f.push_back(double_field("augment.hflip_prob", ACC(augment.hflip_prob)));
    f.push_back(double_field("augment.vflip_prob", ACC(augment.vflip_prob)));
    f.push_back(double_field("augment.rotation_prob", ACC(augment.rotation_prob)));
    f.push_back(double_field("augment.rotation_max_deg", ACC(augment.rotation_max_deg)));
    f.push_back(double_field("augment.gamma", ACC(augment.gamma)));
    f.push_back(double_field("augment.scale_min", ACC(augment.scale_min)));
    f.push_back(double_field("augment.scale_max", ACC(augment.scale_max)));
    return f;
  }();
  return table;
}

#undef ACC

const Field& find(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

void require_positive(int v, const char* key) {
  if (v <= 0) throw ConfigError(std::string(key) + " must be positive");
}

void require_backbone(const BackboneConfig& b, const std::string& section) {
  if (b.base_width <= 0) throw ConfigError(section + ".base_width must be positive");
  if (b.depth < 1 || b.depth > 8) throw ConfigError(section + ".depth must be in [1, 8]");
  if (b.decoder_width <= 0) throw ConfigError(section + ".decoder_width must be positive");
}

void require_divisible(int size, const BackboneConfig& b, const std::string& key) {
  const int d = 1 << (b.depth - 1);
  if (size <= 0 || size % d != 0) {
    throw ConfigError(key + " = " + std::to_string(size) + " must be a positive multiple of " +
                      std::to_string(d) + " for depth " + std::to_string(b.depth));
  }
}

}  // namespace

void set(RunConfig& cfg, const std::string& key, const std::string& value) {
  std::string v = trim(value);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  find(key).set(cfg, v);
}

std::string get(const RunConfig& cfg, const std::string& key) { return find(key).get(cfg); }

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

void apply_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set(cfg, full, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

RunConfig load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_text(cfg, ss.str(), file.string());
  cfg.validate();
  return cfg;
}

std::string render(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << "\n";
      out << "[" << s << "]\n";
      section = s;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(cfg) << "\n";
  }
  return out.str();
}

void RunConfig::validate() const {
  coarse.weights.validate();
  require_positive(coarse.epochs, "coarse.epochs");
  require_positive(coarse.batch_size, "coarse.batch_size");
  require_positive(fine_seg.epochs, "fine_seg.epochs");
  require_positive(fine_seg.batch_size, "fine_seg.batch_size");
  require_positive(fine_loc.epochs, "fine_loc.epochs");
  require_positive(fine_loc.batch_size, "fine_loc.batch_size");
  if (!(coarse.lr > 0)) throw ConfigError("coarse.lr must be positive");
  if (!(fine_seg.lr > 0)) throw ConfigError("fine_seg.lr must be positive");
  if (!(fine_loc.lr > 0)) throw ConfigError("fine_loc.lr must be positive");
  if (!(coarse.sigma_divisor > 0)) throw ConfigError("coarse.sigma_divisor must be positive");
  if (!(fine_loc.sigma_divisor > 0)) throw ConfigError("fine_loc.sigma_divisor must be positive");
  if (fine_seg.jitter < 0) throw ConfigError("fine_seg.jitter must be non-negative");
  if (fine_loc.jitter < 0) throw ConfigError("fine_loc.jitter must be non-negative");
  require_backbone(coarse.backbone, "coarse");
  require_backbone(fine_seg.backbone, "fine_seg");
  require_backbone(fine_loc.backbone, "fine_loc");
  require_divisible(coarse.input_size, coarse.backbone, "coarse.input_size");
  require_divisible(fine_seg.crop_size, fine_seg.backbone, "fine_seg.crop_size");
  require_divisible(fine_loc.crop_size, fine_loc.backbone, "fine_loc.crop_size");
  if (coarse.enabled().empty()) {
    throw ConfigError("coarse.predictor/detector/segmentor: at least one branch must be enabled");
  }
  if (!(inference.peak_radius > 0)) throw ConfigError("inference.peak_radius must be positive");
  if (!(augment.scale_min > 0 && augment.scale_min <= augment.scale_max)) {
    throw ConfigError("augment.scale_min must be positive and not above augment.scale_max");
  }
  for (auto [v, key] : {std::pair{augment.hflip_prob, "augment.hflip_prob"},
                        std::pair{augment.vflip_prob, "augment.vflip_prob"},
                        std::pair{augment.rotation_prob, "augment.rotation_prob"}}) {
    if (v < 0 || v > 1) throw ConfigError(std::string(key) + " must be in [0, 1]");
  }
}

}  // namespace joined::config
