// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned JSON documents (with CSV mirrors) for grids, series, mean
// residuals and run manifests. Numbers are written in shortest round-trip
// form, so loading a document reproduces every double exactly.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "residscope/interventions.hpp"
#include "residscope/metrics.hpp"
#include "residscope/train.hpp"

namespace residscope {

inline constexpr char kHeatmapSchema[] = "heatmap/v1";
inline constexpr char kSeriesSchema[] = "series/v1";
inline constexpr char kManifestSchema[] = "manifest/v1";
inline constexpr char kMeanResidualSchema[] = "meanresid/v1";
inline constexpr char kFigureJobSchema[] = "figurejob/v1";

std::string grid_to_json(const HeatmapGrid& grid);
HeatmapGrid grid_from_json(const std::string& text);
std::string grid_to_csv(const HeatmapGrid& grid);

std::string series_to_json(const LayerSeries& series);
LayerSeries series_from_json(const std::string& text);
std::string series_to_csv(const LayerSeries& series);

std::string mean_residual_to_json(const MeanResidual& mean);
MeanResidual mean_residual_from_json(const std::string& text);

std::string loss_curve_to_csv(const std::vector<LossPoint>& curve);

// Reads the document's "schema" field without validating the rest.
std::string schema_of(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

// Writes `<stem>.json` and `<stem>.csv` under `dir`; returns both paths.
std::vector<std::filesystem::path> emit_grid(const HeatmapGrid& grid,
                                             const std::filesystem::path& dir,
                                             const std::string& stem);
std::vector<std::filesystem::path> emit_series(const LayerSeries& series,
                                               const std::filesystem::path& dir,
                                               const std::string& stem);

HeatmapGrid load_grid(const std::filesystem::path& path);
LayerSeries load_series(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;    // relative to the manifest's directory
  std::string schema;  // document schema, or "csv", "checkpoint", ...
  std::string analysis;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::string run_id;
  std::string kind;
  std::string config;  // canonical JSON of the configuration
  std::vector<ManifestEntry> files;

  bool operator==(const Manifest&) const = default;
};

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);

}  // namespace residscope
