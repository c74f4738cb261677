#include "farconf/params_io.hpp"

#include <fstream>
#include <sstream>

#include "farconf/error.hpp"

namespace farconf {

namespace {

template <class T>
T require(const ordered_json& j, const char* key, std::size_t offset) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(std::string("missing field '") + key + "'", offset);
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("field '") + key + "': " + e.what(), offset);
  }
}

}  // namespace

ordered_json spec_to_json(const MlpSpec& spec) {
  ordered_json j;
  j["input_dim"] = spec.input_dim;
  j["hidden_dims"] = spec.hidden_dims;
  j["output_dim"] = spec.output_dim;
  j["activation"] = std::string(to_string(spec.activation));
  return j;
}

MlpSpec spec_from_json(const ordered_json& j) {
  MlpSpec s;
  s.input_dim = require<std::size_t>(j, "input_dim", 0);
  s.hidden_dims = require<std::vector<std::size_t>>(j, "hidden_dims", 0);
  s.output_dim = require<std::size_t>(j, "output_dim", 0);
  s.activation = activation_from_string(require<std::string>(j, "activation", 0));
  return s;
}

ordered_json params_to_json(const NetworkParams& params) {
  params.validate();
  ordered_json j;
  j["spec"] = spec_to_json(params.spec);
  ordered_json layers = ordered_json::array();
  for (const auto& l : params.layers) {
    ordered_json w = ordered_json::array();
    for (std::size_t r = 0; r < l.weight.rows(); ++r) {
      auto row = l.weight.row(r);
      w.push_back(std::vector<double>(row.begin(), row.end()));
    }
    ordered_json layer;
    layer["w"] = std::move(w);
    layer["b"] = l.bias.data();
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

NetworkParams params_from_json(const ordered_json& j) {
  if (!j.is_object() || !j.contains("spec")) throw ParseError("missing field 'spec'", 0);
  NetworkParams p{spec_from_json(j.at("spec")), {}};
  const auto& layers = j.contains("layers") ? j.at("layers") : ordered_json();
  if (!layers.is_array()) throw ParseError("missing array 'layers'", 0);
  for (const auto& lj : layers) {
    auto rows = require<std::vector<std::vector<double>>>(lj, "w", 0);
    auto bias = require<std::vector<double>>(lj, "b", 0);
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& r : rows) {
      if (r.size() != cols) throw ShapeError("ragged weight matrix");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    const std::size_t out = rows.size();
    const std::size_t nb = bias.size();
    p.layers.push_back({Tensor({out, cols}, std::move(flat)), Tensor({nb}, std::move(bias))});
  }
  p.validate();
  return p;
}

std::string serialize_params(const NetworkParams& params) {
  return params_to_json(params).dump() + "\n";
}

NetworkParams parse_params(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed parameter file: ") + e.what(), e.byte);
  }
  return params_from_json(j);
}

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  write_file(path, serialize_params(params));
}

NetworkParams load_params(const std::filesystem::path& path) { return parse_params(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace farconf
