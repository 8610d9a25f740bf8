#pragma once

// Shared fixtures: random instances and scratch directories.

#include <filesystem>
#include <string>
#include <vector>

#include "g2cl/geo.hpp"
#include "g2cl/loss.hpp"
#include "g2cl/random.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("g2cl_test_" + tag + "_" + std::to_string(g2cl::splitmix64(reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// Points on a coarse lattice so exact distance ties and duplicate
// coordinates both occur.
inline std::vector<g2cl::geo::Location> lattice_locations(g2cl::Rng& rng, int n) {
  std::vector<g2cl::geo::Location> locs;
  for (int i = 0; i < n; ++i) {
    const double lat = 30.0 + 0.001 * static_cast<double>(rng.below(12));
    const double lon = 120.0 + 0.001 * (static_cast<double>(rng.below(25)) - 12.0);
    locs.push_back({"P" + std::to_string(1000 + i), g2cl::geo::GeoPoint(lat, lon)});
  }
  return locs;
}

// Locations on a rows x cols grid with 20 m spacing.
inline std::vector<g2cl::geo::Location> grid(int rows, int cols) {
  std::vector<g2cl::geo::Location> locs;
  const g2cl::geo::GeoPoint origin(30.0, 120.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      locs.push_back({"G" + std::to_string(r) + "_" + std::to_string(c), g2cl::geo::offset_meters(origin, 20.0 * c, 20.0 * r)});
  return locs;
}

inline g2cl::MatrixD unit_rows(g2cl::Rng& rng, int n, int d) {
  g2cl::MatrixD m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
    m.row(i).normalize();
  }
  return m;
}

// Batch of b pairs drawn from `locs` (with repeats so mining has positives).
inline g2cl::loss::BatchFeatures random_batch(g2cl::Rng& rng, const std::vector<g2cl::geo::Location>& locs, int b,
                                              int d) {
  g2cl::loss::BatchFeatures f;
  f.sat = unit_rows(rng, b, d);
  f.uav = unit_rows(rng, b, d);
  const auto pool = 1 + rng.below(std::min<std::size_t>(locs.size(), static_cast<std::size_t>(b)));
  for (int i = 0; i < b; ++i) {
    const auto& l = locs[rng.below(pool)];
    f.location_ids.push_back(l.id);
    f.geo_points.push_back(l.point);
  }
  return f;
}

}  // namespace testutil
