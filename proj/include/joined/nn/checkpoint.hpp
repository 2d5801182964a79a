#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "joined/nn/networks.hpp"

namespace joined::nn {

nlohmann::json to_json(const EncoderSpec& s);
nlohmann::json to_json(const JsdmSpec& s);
nlohmann::json to_json(const FsmSpec& s);
nlohmann::json to_json(const FlmSpec& s);
EncoderSpec encoder_spec_from_json(const nlohmann::json& j);
JsdmSpec jsdm_spec_from_json(const nlohmann::json& j);
FsmSpec fsm_spec_from_json(const nlohmann::json& j);
FlmSpec flm_spec_from_json(const nlohmann::json& j);

/// Writes `graph.json` (kind, spec echo, tensor shapes) and one raw
/// little-endian float32 blob per tensor, named by its layer path.
void save_checkpoint(const std::filesystem::path& dir, const std::string& kind,
                     const nlohmann::json& spec, const std::vector<NamedTensor<float>>& state);

/// Reads `graph.json`; throws InputError when missing or of another kind.
nlohmann::json read_graph(const std::filesystem::path& dir, const std::string& kind);

/// Fills every tensor in `state` from the blobs. Any missing blob or shape
/// mismatch throws InputError naming the tensor.
void load_state(const std::filesystem::path& dir, const std::vector<NamedTensor<float>>& state);

/// Loads only `encoder.*` tensors, for externally supplied encoder weights with
/// matching shapes. Returns the number of tensors loaded.
std::size_t load_encoder_weights(const std::filesystem::path& dir,
                                 const std::vector<NamedTensor<float>>& state);

void save(const std::filesystem::path& dir, const JsdmNet<float>& net);
void save(const std::filesystem::path& dir, const FsmNet<float>& net);
void save(const std::filesystem::path& dir, const FlmNet<float>& net);
std::unique_ptr<JsdmNet<float>> load_jsdm(const std::filesystem::path& dir);
std::unique_ptr<FsmNet<float>> load_fsm(const std::filesystem::path& dir);
std::unique_ptr<FlmNet<float>> load_flm(const std::filesystem::path& dir);

}  // namespace joined::nn
