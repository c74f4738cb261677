#include "farconf/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "farconf/error.hpp"
#include "farconf/params_io.hpp"

namespace farconf {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string dataset_to_csv(const Dataset& ds) {
  const std::size_t d = ds.empty() ? 2 : ds.dim();
  std::string out;
  for (std::size_t j = 0; j < d; ++j) out += "x" + std::to_string(j) + ",";
  out += "label\n";
  for (const auto& s : ds.samples) {
    for (double v : s.point) {
      out += format_double(v);
      out += ',';
    }
    out += s.is_ood() ? std::string("OOD") : std::to_string(s.label);
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text) {
  Dataset ds;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::size_t line_start = pos;
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t f = 0;
    while (true) {
      const std::size_t comma = line.find(',', f);
      fields.push_back(line.substr(f, comma == std::string_view::npos ? line.npos : comma - f));
      if (comma == std::string_view::npos) break;
      f = comma + 1;
    }
    if (line_no == 1) {
      if (fields.size() < 2 || fields.back() != "label") {
        throw ParseError("dataset header must end with 'label'", line_start);
      }
      columns = fields.size();
      continue;
    }
    if (fields.size() != columns) {
      throw ParseError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                           " fields, expected " + std::to_string(columns),
                       line_start);
    }
    LabeledSample s;
    for (std::size_t j = 0; j + 1 < fields.size(); ++j) {
      double v = 0.0;
      const auto res = std::from_chars(fields[j].data(), fields[j].data() + fields[j].size(), v);
      if (res.ec != std::errc() || res.ptr != fields[j].data() + fields[j].size()) {
        throw ParseError("bad number on line " + std::to_string(line_no), line_start);
      }
      s.point.push_back(v);
    }
    const auto label = fields.back();
    if (label == "OOD") {
      s.label = kOodLabel;
    } else {
      int v = 0;
      const auto res = std::from_chars(label.data(), label.data() + label.size(), v);
      if (res.ec != std::errc() || res.ptr != label.data() + label.size() || v < 0) {
        throw ParseError("bad label on line " + std::to_string(line_no), line_start);
      }
      s.label = v;
    }
    ds.samples.push_back(std::move(s));
  }
  if (line_no == 0) throw ParseError("empty dataset file", 0);
  return ds;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void write_dataset(const std::filesystem::path& csv_path, const Dataset& ds,
                   const nlohmann::ordered_json& config) {
  write_file(csv_path, dataset_to_csv(ds));
  nlohmann::ordered_json meta;
  meta["provenance"] = std::string(to_string(ds.provenance));
  meta["seed"] = ds.seed;
  meta["config"] = config;
  write_file(sidecar_path(csv_path), meta.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& csv_path) {
  Dataset ds = dataset_from_csv(read_file(csv_path));
  const auto meta_path = sidecar_path(csv_path);
  if (std::filesystem::exists(meta_path)) {
    const auto meta = nlohmann::ordered_json::parse(read_file(meta_path));
    ds.provenance = provenance_from_string(meta.at("provenance").get<std::string>());
    ds.seed = meta.at("seed").get<std::uint64_t>();
  }
  return ds;
}

}  // namespace farconf
