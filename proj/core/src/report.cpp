// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "residscope/errors.hpp"

namespace residscope {

using nlohmann::json;

namespace {

json meta_to_json(const Meta& m) {
  json flags = json::object();
  for (const auto& [k, v] : m.flags) flags[k] = v;
  return {{"model", m.model},
          {"corpus", m.corpus},
          {"seed", m.seed},
          {"reduction", m.reduction},
          {"flags", flags}};
}

Meta meta_from_json(const json& j) {
  Meta m;
  m.model = j.at("model").get<std::string>();
  m.corpus = j.at("corpus").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.reduction = j.at("reduction").get<std::string>();
  for (const auto& [k, v] : j.at("flags").items()) m.flags[k] = v.get<std::string>();
  return m;
}

json value_json(const std::optional<double>& v, const std::string& where) {
  if (!v) return nullptr;
  if (!std::isfinite(*v)) throw ContractError(where + ": non-finite value cannot be serialized");
  return *v;
}

std::optional<double> value_from(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

json parse_document(const std::string& text, const char* schema) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed JSON document: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string()) {
    throw ContractError("document has no schema field");
  }
  if (j["schema"].get<std::string>() != schema) {
    throw ContractError("unsupported schema '" + j["schema"].get<std::string>() + "', expected '" +
                        schema + "'");
  }
  return j;
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ContractError(std::string(what) + ": " + e.what());
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos && s.find(' ') != 0 &&
      (s.empty() || s.back() != ' ')) {
    return s;
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string grid_to_json(const HeatmapGrid& grid) {
  grid.validate();
  json values = json::array();
  for (std::size_t r = 0; r < grid.n_rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < grid.n_cols(); ++c)
      row.push_back(value_json(grid.at(r, c), "grid '" + grid.name + "'"));
    values.push_back(std::move(row));
  }
  json j = {{"schema", kHeatmapSchema}, {"name", grid.name},
            {"row_axis", grid.row_axis}, {"col_axis", grid.col_axis},
            {"rows", grid.rows},         {"cols", grid.cols},
            {"values", values},          {"meta", meta_to_json(grid.meta)}};
  return dump(j);
}

HeatmapGrid grid_from_json(const std::string& text) {
  const json j = parse_document(text, kHeatmapSchema);
  return guarded("heatmap document", [&] {
    HeatmapGrid g;
    g.name = j.at("name").get<std::string>();
    g.row_axis = j.at("row_axis").get<std::string>();
    g.col_axis = j.at("col_axis").get<std::string>();
    g.rows = j.at("rows").get<std::vector<std::string>>();
    g.cols = j.at("cols").get<std::vector<std::string>>();
    const auto& values = j.at("values");
    if (values.size() != g.rows.size()) {
      throw ContractError("heatmap '" + g.name + "': " + std::to_string(values.size()) +
                          " value rows for " + std::to_string(g.rows.size()) + " row ticks");
    }
    for (const auto& row : values) {
      if (row.size() != g.cols.size()) {
        throw ContractError("heatmap '" + g.name + "': value row width " +
                            std::to_string(row.size()) + " for " +
                            std::to_string(g.cols.size()) + " column ticks");
      }
      for (const auto& v : row) g.values.push_back(value_from(v));
    }
    g.meta = meta_from_json(j.at("meta"));
    g.validate();
    return g;
  });
}

std::string grid_to_csv(const HeatmapGrid& grid) {
  grid.validate();
  std::string out = csv_field(grid.row_axis);
  for (const auto& c : grid.cols) out += "," + csv_field(c);
  out += "\n";
  for (std::size_t r = 0; r < grid.n_rows(); ++r) {
    out += csv_field(grid.rows[r]);
    for (std::size_t c = 0; c < grid.n_cols(); ++c) out += "," + csv_number(grid.at(r, c));
    out += "\n";
  }
  return out;
}

std::string series_to_json(const LayerSeries& s) {
  if (s.values.size() != s.ticks.size()) {
    throw ContractError("series '" + s.name + "': " + std::to_string(s.values.size()) +
                        " values for " + std::to_string(s.ticks.size()) + " ticks");
  }
  json values = json::array();
  for (const auto& v : s.values) values.push_back(value_json(v, "series '" + s.name + "'"));
  json j = {{"schema", kSeriesSchema}, {"name", s.name},     {"axis", s.axis},
            {"ticks", s.ticks},        {"values", values},   {"excluded", s.excluded},
            {"meta", meta_to_json(s.meta)}};
  return dump(j);
}

LayerSeries series_from_json(const std::string& text) {
  const json j = parse_document(text, kSeriesSchema);
  return guarded("series document", [&] {
    LayerSeries s;
    s.name = j.at("name").get<std::string>();
    s.axis = j.at("axis").get<std::string>();
    s.ticks = j.at("ticks").get<std::vector<std::string>>();
    for (const auto& v : j.at("values")) s.values.push_back(value_from(v));
    if (s.values.size() != s.ticks.size()) {
      throw ContractError("series '" + s.name + "': values do not match ticks");
    }
    s.excluded = j.at("excluded").get<std::size_t>();
    s.meta = meta_from_json(j.at("meta"));
    return s;
  });
}

std::string series_to_csv(const LayerSeries& s) {
  std::string out = csv_field(s.axis) + "," + csv_field(s.name) + "\n";
  for (std::size_t i = 0; i < s.ticks.size(); ++i)
    out += csv_field(s.ticks[i]) + "," + csv_number(s.values.at(i)) + "\n";
  return out;
}

std::string mean_residual_to_json(const MeanResidual& mean) {
  json j = {{"schema", kMeanResidualSchema},
            {"sample_count", mean.sample_count},
            {"layers", mean.layers}};
  return dump(j);
}

MeanResidual mean_residual_from_json(const std::string& text) {
  const json j = parse_document(text, kMeanResidualSchema);
  return guarded("mean residual document", [&] {
    MeanResidual m;
    m.sample_count = j.at("sample_count").get<std::size_t>();
    m.layers = j.at("layers").get<std::vector<std::vector<double>>>();
    for (const auto& l : m.layers) {
      if (l.size() != m.width()) throw ContractError("mean residual: ragged layers");
    }
    return m;
  });
}

std::string loss_curve_to_csv(const std::vector<LossPoint>& curve) {
  std::string out = "step,loss,answer_loss\n";
  for (const auto& p : curve)
    out += std::to_string(p.step) + "," + csv_number(p.loss) + "," + csv_number(p.answer_loss) +
           "\n";
  return out;
}

std::string schema_of(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.is_object() && j.contains("schema") && j["schema"].is_string())
      return j["schema"].get<std::string>();
  } catch (const json::exception&) {
  }
  return "";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  out.close();
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

std::vector<std::filesystem::path> emit_grid(const HeatmapGrid& grid,
                                             const std::filesystem::path& dir,
                                             const std::string& stem) {
  const auto json_path = dir / (stem + ".json");
  const auto csv_path = dir / (stem + ".csv");
  const std::string j = grid_to_json(grid), c = grid_to_csv(grid);
  write_file(json_path, j);
  write_file(csv_path, c);
  return {json_path, csv_path};
}

std::vector<std::filesystem::path> emit_series(const LayerSeries& series,
                                               const std::filesystem::path& dir,
                                               const std::string& stem) {
  const auto json_path = dir / (stem + ".json");
  const auto csv_path = dir / (stem + ".csv");
  const std::string j = series_to_json(series), c = series_to_csv(series);
  write_file(json_path, j);
  write_file(csv_path, c);
  return {json_path, csv_path};
}

HeatmapGrid load_grid(const std::filesystem::path& path) { return grid_from_json(read_file(path)); }

LayerSeries load_series(const std::filesystem::path& path) {
  return series_from_json(read_file(path));
}

std::string manifest_to_json(const Manifest& m) {
  json files = json::array();
  for (const auto& f : m.files)
    files.push_back({{"path", f.path}, {"schema", f.schema}, {"analysis", f.analysis}});
  json config;
  try {
    config = m.config.empty() ? json::object() : json::parse(m.config);
  } catch (const json::exception& e) {
    throw ContractError(std::string("manifest config is not JSON: ") + e.what());
  }
  json j = {{"schema", kManifestSchema},
            {"run_id", m.run_id},
            {"kind", m.kind},
            {"config", config},
            {"files", files}};
  return dump(j);
}

Manifest manifest_from_json(const std::string& text) {
  const json j = parse_document(text, kManifestSchema);
  return guarded("manifest", [&] {
    Manifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.kind = j.at("kind").get<std::string>();
    m.config = j.at("config").dump();
    for (const auto& f : j.at("files")) {
      m.files.push_back({f.at("path").get<std::string>(), f.at("schema").get<std::string>(),
                         f.at("analysis").get<std::string>()});
    }
    return m;
  });
}

}  // namespace residscope
