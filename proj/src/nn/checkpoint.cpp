#include "joined/nn/checkpoint.hpp"

#include <fstream>
#include <map>

#include "joined/types.hpp"

namespace joined::nn {

namespace fs = std::filesystem;
using nlohmann::json;
using losses::Branch;
using losses::BranchSet;

json to_json(const EncoderSpec& s) {
  return {{"in_channels", s.in_channels}, {"depth", s.depth}, {"base_width", s.base_width}};
}

EncoderSpec encoder_spec_from_json(const json& j) {
  return {j.at("in_channels").get<int>(), j.at("depth").get<int>(),
          j.at("base_width").get<int>()};
}

json to_json(const JsdmSpec& s) {
  json branches = json::array();
  const char* names[] = {"P", "D", "S"};
  for (int b = 0; b < 3; ++b) {
    if (s.enabled.contains(static_cast<Branch>(b))) branches.push_back(names[b]);
  }
  return {{"encoder", to_json(s.encoder)},
          {"decoder_start_width", s.decoder.start_width},
          {"bridge", s.bridge},
          {"seg_activation", to_string(s.seg_activation)},
          {"branches", branches},
          {"input_size", s.input_size}};
}

JsdmSpec jsdm_spec_from_json(const json& j) {
  JsdmSpec s;
  s.encoder = encoder_spec_from_json(j.at("encoder"));
  s.decoder.start_width = j.at("decoder_start_width").get<int>();
  s.bridge = j.at("bridge").get<bool>();
  s.seg_activation = seg_activation_from_string(j.at("seg_activation").get<std::string>());
  s.enabled = {};
  for (const auto& b : j.at("branches")) {
    const auto name = b.get<std::string>();
    if (name == "P") s.enabled.insert(Branch::Predictor);
    else if (name == "D") s.enabled.insert(Branch::Detector);
    else if (name == "S") s.enabled.insert(Branch::Segmentor);
    else throw InputError("graph.json: unknown branch '" + name + "'");
  }
  s.input_size = j.at("input_size").get<int>();
  return s;
}

json to_json(const FsmSpec& s) {
  return {{"encoder", to_json(s.encoder)},
          {"decoder_start_width", s.decoder.start_width},
          {"seg_activation", to_string(s.seg_activation)},
          {"input_size", s.input_size}};
}

FsmSpec fsm_spec_from_json(const json& j) {
  FsmSpec s;
  s.encoder = encoder_spec_from_json(j.at("encoder"));
  s.decoder.start_width = j.at("decoder_start_width").get<int>();
  s.seg_activation = seg_activation_from_string(j.at("seg_activation").get<std::string>());
  s.input_size = j.at("input_size").get<int>();
  return s;
}

json to_json(const FlmSpec& s) {
  return {{"encoder", to_json(s.encoder)},
          {"decoder_start_width", s.decoder.start_width},
          {"hidden", s.hidden},
          {"input_size", s.input_size}};
}

FlmSpec flm_spec_from_json(const json& j) {
  FlmSpec s;
  s.encoder = encoder_spec_from_json(j.at("encoder"));
  s.decoder.start_width = j.at("decoder_start_width").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.input_size = j.at("input_size").get<int>();
  return s;
}

void save_checkpoint(const fs::path& dir, const std::string& kind, const json& spec,
                     const std::vector<NamedTensor<float>>& state) {
  fs::create_directories(dir);
  json tensors = json::object();
  for (const auto& t : state) {
    const Shape& s = t.tensor->shape();
    tensors[t.name] = {s.n, s.c, s.h, s.w};
    std::ofstream out(dir / (t.name + ".bin"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(t.tensor->data()),
              static_cast<std::streamsize>(t.tensor->size() * sizeof(float)));
    if (!out) throw std::runtime_error("failed to write " + (dir / (t.name + ".bin")).string());
  }
  json graph = {{"kind", kind}, {"spec", spec}, {"tensors", tensors}};
  std::ofstream(dir / "graph.json") << graph.dump(2) << "\n";
}

json read_graph(const fs::path& dir, const std::string& kind) {
  std::ifstream in(dir / "graph.json");
  if (!in) throw InputError("checkpoint " + dir.string() + ": missing graph.json");
  json g;
  try {
    g = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("checkpoint " + dir.string() + ": " + e.what());
  }
  if (g.value("kind", "") != kind) {
    throw InputError("checkpoint " + dir.string() + ": expected kind '" + kind + "', found '" +
                     g.value("kind", "") + "'");
  }
  return g;
}

namespace {

void load_one(const fs::path& dir, const json& shapes, const NamedTensor<float>& t) {
  if (!shapes.contains(t.name)) {
    throw InputError("checkpoint " + dir.string() + ": no tensor '" + t.name + "'");
  }
  const auto dims = shapes.at(t.name).get<std::vector<int>>();
  const Shape want = t.tensor->shape();
  if (dims.size() != 4 || Shape{dims[0], dims[1], dims[2], dims[3]} != want) {
    throw InputError("checkpoint " + dir.string() + ": shape mismatch for '" + t.name +
                     "': stored " + shapes.at(t.name).dump() + ", expected " + want.str());
  }
  const fs::path file = dir / (t.name + ".bin");
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("checkpoint: missing blob " + file.string());
  const auto bytes = static_cast<std::uintmax_t>(t.tensor->size() * sizeof(float));
  if (fs::file_size(file) != bytes) {
    throw InputError("checkpoint: blob size mismatch for '" + t.name + "'");
  }
  in.read(reinterpret_cast<char*>(t.tensor->data()), static_cast<std::streamsize>(bytes));
}

json tensor_shapes(const fs::path& dir) {
  std::ifstream in(dir / "graph.json");
  if (!in) throw InputError("checkpoint " + dir.string() + ": missing graph.json");
  return json::parse(in).at("tensors");
}

}  // namespace

void load_state(const fs::path& dir, const std::vector<NamedTensor<float>>& state) {
  const json shapes = tensor_shapes(dir);
  for (const auto& t : state) load_one(dir, shapes, t);
}

std::size_t load_encoder_weights(const fs::path& dir,
                                 const std::vector<NamedTensor<float>>& state) {
  const json shapes = tensor_shapes(dir);
  std::size_t loaded = 0;
  for (const auto& t : state) {
    if (t.name.rfind("encoder.", 0) != 0) continue;
    load_one(dir, shapes, t);
    ++loaded;
  }
  return loaded;
}

void save(const fs::path& dir, const JsdmNet<float>& net) {
  save_checkpoint(dir, "jsdm", to_json(net.spec()), net.state());
}
void save(const fs::path& dir, const FsmNet<float>& net) {
  save_checkpoint(dir, "fsm", to_json(net.spec()), net.state());
}
void save(const fs::path& dir, const FlmNet<float>& net) {
  save_checkpoint(dir, "flm", to_json(net.spec()), net.state());
}

std::unique_ptr<JsdmNet<float>> load_jsdm(const fs::path& dir) {
  auto net = std::make_unique<JsdmNet<float>>(jsdm_spec_from_json(read_graph(dir, "jsdm").at("spec")), 0);
  load_state(dir, net->state());
  return net;
}

std::unique_ptr<FsmNet<float>> load_fsm(const fs::path& dir) {
  auto net = std::make_unique<FsmNet<float>>(fsm_spec_from_json(read_graph(dir, "fsm").at("spec")), 0);
  load_state(dir, net->state());
  return net;
}

std::unique_ptr<FlmNet<float>> load_flm(const fs::path& dir) {
  auto net = std::make_unique<FlmNet<float>>(flm_spec_from_json(read_graph(dir, "flm").at("spec")), 0);
  load_state(dir, net->state());
  return net;
}

}  // namespace joined::nn
