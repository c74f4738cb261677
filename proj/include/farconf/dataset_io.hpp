#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "farconf/synth.hpp"

namespace farconf {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// CSV with header `x0,x1,...,label`; label is a class index or `OOD`.
std::string dataset_to_csv(const Dataset& ds);
// Provenance and seed are not stored in the CSV; they come from the sidecar.
Dataset dataset_from_csv(std::string_view text);

// Writes `<stem>.csv` and `<stem>.meta.json` ({provenance, seed, config}).
void write_dataset(const std::filesystem::path& csv_path, const Dataset& ds,
                   const nlohmann::ordered_json& config);
Dataset read_dataset(const std::filesystem::path& csv_path);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace farconf
