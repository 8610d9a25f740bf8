#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>

#include "g2cl/dataset.hpp"
#include "g2cl/error.hpp"
#include "g2cl/eval.hpp"
#include "g2cl/geo.hpp"
#include "g2cl/synth.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace g2cl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path -> bytes for every file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST_CASE("default grid counts") {
  testutil::TempDir dir("synth_counts");
  const auto out = synth::generate(synth::SynthConfig{}, dir.path);
  CHECK(out.locations == 100);
  CHECK(out.uav_images == 300);
  CHECK(out.satellite_images == 600);
  CHECK(out.query_images == 300);
  const auto m = dataset::load_manifest(out.manifest_path);
  CHECK(m.records().size() == 900);
  CHECK(dataset::make_pairs(m).size() == 1800);
  CHECK(m.locations().size() == 100);

  const auto q = dataset::load_manifest(out.queries_path);
  std::set<std::string> train_ids;
  for (const auto& r : m.records()) train_ids.insert(r.id);
  for (const auto& r : q.records()) {
    CHECK(r.platform == dataset::Platform::uav);
    CHECK(train_ids.count(r.id) == 0);
  }
}

TEST_CASE("generation is byte-deterministic and seed-sensitive") {
  testutil::TempDir a("synth_a"), b("synth_b"), c("synth_c");
  synth::SynthConfig cfg;
  cfg.grid_rows = 2;
  cfg.grid_cols = 3;
  cfg.image_size = 24;
  synth::generate(cfg, a.path);
  synth::generate(cfg, b.path);
  const auto ta = tree(a.path);
  CHECK(ta.size() == 1 + 1 + 6 * (6 + 3 + 3));
  CHECK(ta == tree(b.path));
  cfg.seed = 1;
  synth::generate(cfg, c.path);
  const auto tc = tree(c.path);
  CHECK(tc.size() == ta.size());
  CHECK(tc != ta);
}

TEST_CASE("adjacent cells are 20 m apart") {
  const synth::SynthConfig cfg;
  for (int r = 0; r < cfg.grid_rows; ++r)
    for (int c = 0; c < cfg.grid_cols; ++c) {
      const auto p = synth::location_point(cfg, r, c);
      if (c + 1 < cfg.grid_cols) CHECK(std::abs(geo::haversine(p, synth::location_point(cfg, r, c + 1)) - 20.0) < 0.1);
      if (r + 1 < cfg.grid_rows) CHECK(std::abs(geo::haversine(p, synth::location_point(cfg, r + 1, c)) - 20.0) < 0.1);
    }
  CHECK(synth::location_point(cfg, 0, 0) == cfg.origin);
}

TEST_CASE("config validation") {
  synth::SynthConfig cfg;
  cfg.grid_rows = 1;
  cfg.grid_cols = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.spacing_m = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.uav_altitudes.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(synth::SynthConfig{}.validate());
}

TEST_CASE("oracle embeddings order the gallery by geography") {
  testutil::TempDir dir("synth_oracle");
  synth::SynthConfig cfg;
  cfg.grid_rows = 6;
  cfg.grid_cols = 7;
  cfg.image_size = 8;
  cfg.sat_scales = {dataset::SatScale::big};
  cfg.sat_times = {"2022"};
  const auto out = synth::generate(cfg, dir.path);
  const auto m = dataset::load_manifest(out.manifest_path);
  const auto gallery_m = m.filter([](const dataset::ImageRecord& r) { return r.platform == dataset::Platform::satellite; });
  const auto q = synth::oracle_embeddings(dataset::load_manifest(out.queries_path));
  const auto g = synth::oracle_embeddings(gallery_m);
  for (Eigen::Index i = 0; i < g.matrix.rows(); ++i) CHECK(std::abs(g.matrix.row(i).norm() - 1.0f) < 1e-5f);

  const auto results = eval::rank_all(q, g);
  for (const auto& r : results) {
    CHECK(r.ranked.front().location_id == r.query_location);
    // Equal grid distances (3-4-5 offsets vs a straight run) differ by under a millimetre.
    for (std::size_t i = 1; i < r.ranked.size(); ++i) CHECK(r.ranked[i].haversine_m >= r.ranked[i - 1].haversine_m - 1e-2);
  }
  CHECK(eval::recall_at_k(results, eval::truth_from(results), 1) == 1.0);

  // Each query's SDM equals the best any ordering of its top K could score.
  for (int k = 1; k <= 5; ++k)
    for (const auto& r : results) {
      std::vector<double> d;
      for (int i = 0; i < k; ++i) d.push_back(r.ranked[static_cast<std::size_t>(i)].haversine_m);
      auto sorted = d;
      std::sort(sorted.begin(), sorted.end());
      CHECK(eval::sdm_at_k({r}, k, 20.0) == doctest::Approx(oracle::sdm_one(sorted, k, 20.0)).epsilon(1e-12));
    }
}
