#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "g2cl/dataset.hpp"
#include "g2cl/eval.hpp"
#include "g2cl/geo.hpp"

namespace g2cl::synth {

struct SynthConfig {
  int grid_rows = 10;
  int grid_cols = 10;
  double spacing_m = 20.0;
  geo::GeoPoint origin{30.0, 120.0};
  std::vector<double> uav_altitudes = {80.0, 90.0, 100.0};
  std::vector<dataset::SatScale> sat_scales = {dataset::SatScale::small, dataset::SatScale::middle,
                                               dataset::SatScale::big};
  std::vector<std::string> sat_times = {"2020", "2022"};
  int image_size = 32;
  std::uint64_t seed = 0;
  // Held-out UAV renderings per (location, altitude), written to queries.jsonl.
  int query_views = 1;

  void validate() const;
};

struct SynthOutput {
  std::filesystem::path manifest_path;  // satellite + training UAV records
  std::filesystem::path queries_path;   // held-out UAV records
  std::size_t locations = 0;
  std::size_t satellite_images = 0;
  std::size_t uav_images = 0;
  std::size_t query_images = 0;
};

// Renders the benchmark into out_dir (images/, manifest.jsonl, queries.jsonl).
// A pure function of the config; locations render in parallel.
SynthOutput generate(const SynthConfig& config, const std::filesystem::path& out_dir);

// Location (row, col) centre, placed by local equirectangular offsets.
geo::GeoPoint location_point(const SynthConfig& config, int row, int col);
std::string location_id(int row, int col);

// Ground-truth "cheat" embeddings computed from GPS only: distances between
// rows are monotone in geographic distance across a desk-scale area.
eval::FeatureStore oracle_embeddings(const dataset::Manifest& manifest, int dims = 64);

}  // namespace g2cl::synth
