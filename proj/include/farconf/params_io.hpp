#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "farconf/mlp.hpp"

namespace farconf {

using ordered_json = nlohmann::ordered_json;

// {"input_dim", "hidden_dims", "output_dim", "activation"}
ordered_json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const ordered_json& j);

// {"spec": {...}, "layers": [{"w": [[...]], "b": [...]}, ...]}. Doubles are
// written in shortest round-trip form, so a load after save is bit-exact.
ordered_json params_to_json(const NetworkParams& params);
NetworkParams params_from_json(const ordered_json& j);

std::string serialize_params(const NetworkParams& params);
// Throws ParseError (with byte offset) on malformed text and ShapeError when
// the declared spec disagrees with the stored matrices.
NetworkParams parse_params(std::string_view text);

void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path);

// Whole-file helpers shared by the I/O modules.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace farconf
