#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "g2cl/dataset.hpp"
#include "g2cl/error.hpp"
#include "g2cl/image.hpp"
#include "helpers.hpp"

using namespace g2cl;
using dataset::ImageRecord;
using dataset::Platform;

namespace {

ImageRecord sat(const std::string& loc, int i, geo::GeoPoint p, dataset::SatScale s = dataset::SatScale::big,
                std::string time = "2022-01-01") {
  ImageRecord r;
  r.id = loc + "_s" + std::to_string(i);
  r.platform = Platform::satellite;
  r.location_id = loc;
  r.geo = p;
  r.scale = s;
  r.capture_time = std::move(time);
  r.uri = "images/" + r.id + ".ppm";
  return r;
}

ImageRecord uav(const std::string& loc, int i, geo::GeoPoint p) {
  ImageRecord r;
  r.id = loc + "_u" + std::to_string(i);
  r.platform = Platform::uav;
  r.location_id = loc;
  r.geo = p;
  r.altitude_m = 80.0 + 10.0 * i;
  r.uri = "images/" + r.id + ".ppm";
  return r;
}

// `sats` satellite and `uavs` UAV records at each of n locations.
std::vector<ImageRecord> shaped(int n, int sats, int uavs) {
  std::vector<ImageRecord> recs;
  for (int l = 0; l < n; ++l) {
    const std::string loc = "L" + std::to_string(10000 + l);
    const geo::GeoPoint p(30.0 + 1e-3 * (l / 50), 120.0 + 1e-3 * (l % 50));
    for (int s = 0; s < sats; ++s) recs.push_back(sat(loc, s, p));
    for (int u = 0; u < uavs; ++u) recs.push_back(uav(loc, u, p));
  }
  return recs;
}

Image gradient_image(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>((x + 2 * y + 5 * c) % 17) / 16.0f;
  return img;
}

}  // namespace

TEST_CASE("manifest grouping") {
  const dataset::Manifest m(shaped(2, 1, 3));
  REQUIRE(m.correspondence().size() == 2);
  for (const auto& [loc, c] : m.correspondence()) {
    CHECK(c.satellite.size() == 1);
    CHECK(c.uav.size() == 3);
  }
  CHECK(m.locations().size() == 2);
  CHECK(m.find("L10000_u2") != nullptr);
  CHECK(m.find("missing") == nullptr);
}

TEST_CASE("manifest validation errors") {
  CHECK_THROWS_WITH_AS(dataset::Manifest(std::vector<ImageRecord>{}), doctest::Contains("empty manifest"), DataError);

  auto recs = shaped(2, 1, 1);
  recs[1].geo = geo::GeoPoint(31.0, 121.0);  // same location id, different GPS
  CHECK_THROWS_WITH_AS(dataset::Manifest{recs}, doctest::Contains("L10000"), DataError);

  recs = shaped(1, 1, 2);
  recs[2].id = recs[1].id;
  CHECK_THROWS_AS(dataset::Manifest{recs}, DataError);

  recs = shaped(1, 1, 1);
  recs[0].altitude_m = 100.0;  // satellites carry a scale, never an altitude
  CHECK_THROWS_AS(dataset::Manifest{recs}, DataError);

  recs = shaped(1, 1, 1);
  recs[0].capture_time = "yesterday";
  CHECK_THROWS_AS(dataset::Manifest{recs}, DataError);
}

TEST_CASE("manifest JSON Lines round trip and strict fields") {
  testutil::TempDir dir("manifest");
  const auto recs = shaped(3, 2, 3);
  dataset::write_manifest(dir.path / "m.jsonl", recs);
  const auto m = dataset::load_manifest(dir.path / "m.jsonl", false);
  CHECK(m.records() == recs);
  CHECK(m.base_dir() == dir.path);
  // Files are checked when asked.
  CHECK_THROWS_AS(dataset::load_manifest(dir.path / "m.jsonl", true), DataError);

  std::ofstream(dir.path / "bad.jsonl")
      << R"({"id":"a","platform":"uav","location_id":"L","lat":1,"lon":2,"alt_m":80,"uri":"a.ppm","colour":"red"})"
      << "\n";
  CHECK_THROWS_AS(dataset::load_manifest(dir.path / "bad.jsonl", false), DataError);
  std::ofstream(dir.path / "broken.jsonl") << "{not json\n";
  CHECK_THROWS_AS(dataset::load_manifest(dir.path / "broken.jsonl", false), DataError);
  CHECK_THROWS_AS(dataset::load_manifest(dir.path / "absent.jsonl", false), DataError);
}

TEST_CASE("make_pairs counts") {
  CHECK(dataset::make_pairs(dataset::Manifest(shaped(1, 1, 3))).size() == 3);
  CHECK(dataset::make_pairs(dataset::Manifest(shaped(1, 2, 3))).size() == 6);
  const dataset::Manifest dense(shaped(2256, 6, 3));
  const auto pairs = dataset::make_pairs(dense);
  CHECK(pairs.size() == 40608);
  std::size_t expected = 0;
  for (const auto& [loc, c] : dense.correspondence()) expected += c.satellite.size() * c.uav.size();
  CHECK(pairs.size() == expected);
  for (const auto& p : pairs) {
    REQUIRE(dense.records()[p.sat].location_id == dense.records()[p.uav].location_id);
    CHECK(dense.records()[p.sat].platform == Platform::satellite);
    CHECK(dense.records()[p.uav].platform == Platform::uav);
  }
}

TEST_CASE("make_pairs rejects a location with UAV views but no satellite") {
  auto recs = shaped(2, 1, 2);
  recs.erase(recs.begin());  // drop L10000's satellite
  CHECK_THROWS_AS(dataset::make_pairs(dataset::Manifest(recs)), DataError);
}

TEST_CASE("batch partition arithmetic and coverage") {
  const dataset::Manifest m(shaped(5, 1, 2));  // 10 pairs
  const auto pairs = dataset::make_pairs(m);
  for (std::size_t group : {0u, 2u}) {
    const auto plan = dataset::sample_batches(pairs, m, 4, 7, 0, group);
    REQUIRE(plan.batches.size() == 3);
    CHECK(plan.batches[0].size() == 4);
    CHECK(plan.batches[1].size() == 4);
    CHECK(plan.batches[2].size() == 2);
  }
  CHECK_THROWS_AS(dataset::sample_batches(pairs, m, 1, 0, 0), ConfigError);
  CHECK_THROWS_AS(dataset::sample_batches(pairs, m, 4, 0, 0, 1), ConfigError);
}

TEST_CASE("batches cover every pair once and are reproducible") {
  const dataset::Manifest m(shaped(23, 2, 3));
  const auto pairs = dataset::make_pairs(m);
  for (std::uint64_t epoch = 0; epoch < 5; ++epoch) {
    const auto plan = dataset::sample_batches(pairs, m, 32, 3, epoch, 2);
    std::multiset<std::size_t> seen;
    for (const auto& b : plan.batches) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == pairs.size());
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == pairs.size());
    CHECK(plan.batches == dataset::sample_batches(pairs, m, 32, 3, epoch, 2).batches);
  }
  CHECK(dataset::sample_batches(pairs, m, 32, 3, 0, 2).batches != dataset::sample_batches(pairs, m, 32, 3, 1, 2).batches);
}

TEST_CASE("3 locations x 3 altitudes, batch 6: same-location pairs in every batch") {
  const dataset::Manifest m(shaped(3, 1, 3));
  const auto pairs = dataset::make_pairs(m);
  for (std::size_t group : {0u, 2u})
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto plan = dataset::sample_batches(pairs, m, 6, seed, 0, group);
      for (const auto& b : plan.batches) {
        std::map<std::string, int> count;
        for (auto i : b) ++count[m.records()[pairs[i].sat].location_id];
        int best = 0;
        for (const auto& [loc, n] : count) best = std::max(best, n);
        CHECK(best >= 2);
      }
    }
}

TEST_CASE("grouped sampler keeps several locations per batch") {
  const dataset::Manifest m(shaped(40, 2, 3));
  const auto pairs = dataset::make_pairs(m);
  const auto plan = dataset::sample_batches(pairs, m, 32, 11, 0, 2);
  for (const auto& b : plan.batches) {
    std::map<std::string, int> count;
    for (auto i : b) ++count[m.records()[pairs[i].sat].location_id];
    CHECK(count.size() >= 2);
    int best = 0;
    for (const auto& [loc, n] : count) best = std::max(best, n);
    CHECK(best >= 2);
  }
}

TEST_CASE("odd pair counts: strays ride with another location") {
  const dataset::Manifest m(shaped(20, 1, 3));  // 3 pairs per location
  const auto pairs = dataset::make_pairs(m);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto plan = dataset::sample_batches(pairs, m, 12, seed, 0, 2);
    std::size_t seen = 0;
    int crowded = 0;
    for (const auto& b : plan.batches) {
      seen += b.size();
      std::map<std::string, int> count;
      for (auto i : b) ++count[m.records()[pairs[i].sat].location_id];
      int best = 0;
      for (const auto& [loc, n] : count) best = std::max(best, n);
      CHECK(best >= 2);
      crowded += best > 2;
    }
    // Leftover groups at the tail may have to share a location.
    CHECK(crowded <= 1);
    CHECK(seen == pairs.size());
  }
}

TEST_CASE("single-location pairs produce a warning") {
  const dataset::Manifest m(shaped(1, 2, 3));
  const auto plan = dataset::sample_batches(dataset::make_pairs(m), m, 4, 0, 0);
  CHECK_FALSE(plan.warnings.empty());
}

TEST_CASE("augment identity, flip involution, determinism") {
  const Image img = gradient_image(12, 16);
  dataset::AugmentParams none;
  none.target_height = 12;
  none.target_width = 16;
  none.flip_prob = 0;
  none.jitter_strength = 0;
  CHECK(dataset::augment(img, none, 123) == img);

  auto flip = none;
  flip.flip_prob = 1;
  flip.target_height = flip.target_width = 8;
  const Image twice = dataset::augment(dataset::augment(img, flip, 1), flip, 2);
  CHECK(twice == resize_bilinear(img, 8, 8));
  CHECK(dataset::augment(img, flip, 1) != resize_bilinear(img, 8, 8));

  dataset::AugmentParams full;
  full.target_height = full.target_width = 10;
  CHECK(dataset::augment(img, full, 99) == dataset::augment(img, full, 99));
  CHECK(dataset::augment(img, full, 99) != dataset::augment(img, full, 100));
  for (float v : dataset::augment(img, full, 5).data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("gallery filter") {
  const geo::GeoPoint p(30, 120);
  dataset::GalleryFilter f;
  f.scale = dataset::SatScale::big;
  f.time = "2022";
  CHECK(f.accepts(sat("L", 0, p, dataset::SatScale::big, "2022-05-01")));
  CHECK_FALSE(f.accepts(sat("L", 0, p, dataset::SatScale::small, "2022-05-01")));
  CHECK_FALSE(f.accepts(sat("L", 0, p, dataset::SatScale::big, "2020-05-01")));
  CHECK(f.accepts(uav("L", 0, p)));
}

TEST_CASE("PPM round trip is exact after 8-bit quantisation") {
  testutil::TempDir dir("ppm");
  Image img = gradient_image(5, 7);
  img.at(0, 0, 0) = 0.123f;
  write_ppm(dir.path / "a.ppm", img);
  Image q = img;
  quantize_8bit(q);
  CHECK(read_ppm(dir.path / "a.ppm") == q);
  CHECK_THROWS_AS(read_ppm(dir.path / "missing.ppm"), DataError);
}
