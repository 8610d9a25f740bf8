#pragma once

// Random retrieval instances and the brute-force ranking used to check them.

#include <string>
#include <vector>

#include "g2cl/eval.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace testutil {

using g2cl::eval::FeatureStore;

inline FeatureStore store_of(const std::vector<std::vector<float>>& rows, const std::vector<std::string>& locs,
                      const std::vector<g2cl::geo::GeoPoint>& pts, const std::string& prefix) {
  FeatureStore s;
  s.matrix.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      s.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    s.ids.push_back(prefix + std::to_string(1000 + i));
    s.meta.push_back({locs[i], pts[i], g2cl::dataset::Platform::satellite});
  }
  return s;
}

// Random gallery with duplicated rows (feature ties) and repeated locations.
struct Instance {
  FeatureStore queries, gallery;
};

inline Instance random_instance(g2cl::Rng& rng, int nq, int ng, int d) {
  const auto locs = lattice_locations(rng, 1 + static_cast<int>(rng.below(30)));
  auto pick = [&](int n, const std::string& prefix, bool dupes) {
    std::vector<std::vector<float>> rows;
    std::vector<std::string> ids;
    std::vector<g2cl::geo::GeoPoint> pts;
    for (int i = 0; i < n; ++i) {
      if (dupes && !rows.empty() && rng.below(5) == 0) {
        rows.push_back(rows[rng.below(rows.size())]);
      } else {
        std::vector<float> r(static_cast<std::size_t>(d));
        // Coarse values so exact distance ties also arise between distinct rows.
        for (auto& v : r) v = static_cast<float>(rng.below(4)) * 0.25f;
        rows.push_back(r);
      }
      const auto& l = locs[rng.below(locs.size())];
      ids.push_back(l.id);
      pts.push_back(l.point);
    }
    return store_of(rows, ids, pts, prefix);
  };
  return {pick(nq, "q", false), pick(ng, "g", true)};
}

inline std::vector<std::vector<oracle::Ranked>> oracle_rank(const FeatureStore& q, const FeatureStore& g) {
  const auto grows = oracle::rows_of(g.matrix.cast<double>());
  const auto qrows = oracle::rows_of(q.matrix.cast<double>());
  std::vector<std::string> locs;
  std::vector<g2cl::geo::GeoPoint> pts;
  for (const auto& m : g.meta) {
    locs.push_back(m.location_id);
    pts.push_back(m.geo);
  }
  std::vector<std::vector<oracle::Ranked>> out;
  for (std::size_t i = 0; i < qrows.size(); ++i) out.push_back(oracle::rank(qrows[i], q.meta[i].geo, grows, g.ids, locs, pts));
  return out;
}

}  // namespace testutil
