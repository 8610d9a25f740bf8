#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "g2cl/geo.hpp"
#include "g2cl/image.hpp"

namespace g2cl::dataset {

enum class Platform { satellite, uav };
enum class SatScale { small, middle, big };

std::string to_string(Platform p);
std::string to_string(SatScale s);
Platform parse_platform(const std::string& s);
SatScale parse_scale(const std::string& s);

struct ImageRecord {
  std::string id;
  Platform platform = Platform::uav;
  std::string location_id;
  geo::GeoPoint geo;
  std::optional<double> altitude_m;    // uav only
  std::optional<SatScale> scale;       // satellite only
  std::optional<std::string> capture_time;
  std::string uri;  // as written in the manifest

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Correspondence {
  std::vector<std::size_t> satellite;  // indices into Manifest::records
  std::vector<std::size_t> uav;
};

// Validated record collection. `correspondence` is always the exact grouping
// of records by location_id.
class Manifest {
 public:
  Manifest() = default;
  // Validates invariants; throws DataError naming the offending record.
  Manifest(std::vector<ImageRecord> records, std::filesystem::path base_dir = {});

  const std::vector<ImageRecord>& records() const { return records_; }
  const std::map<std::string, Correspondence>& correspondence() const { return groups_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  std::filesystem::path resolve(const ImageRecord& r) const { return base_dir_ / r.uri; }
  const ImageRecord* find(const std::string& id) const;

  // Distinct locations with their shared GPS, sorted by id.
  std::vector<geo::Location> locations() const;

  // Records matching the predicate; location grouping recomputed.
  template <typename Pred>
  Manifest filter(Pred pred) const {
    std::vector<ImageRecord> kept;
    for (const auto& r : records_)
      if (pred(r)) kept.push_back(r);
    return Manifest(std::move(kept), base_dir_, /*allow_empty=*/true);
  }

 private:
  Manifest(std::vector<ImageRecord> records, std::filesystem::path base_dir, bool allow_empty);
  void validate_and_group(bool allow_empty);

  std::vector<ImageRecord> records_;
  std::map<std::string, Correspondence> groups_;
  std::map<std::string, std::size_t> by_id_;
  std::filesystem::path base_dir_;
};

// JSON Lines manifest. URIs resolve relative to the manifest's directory.
// With check_files, every referenced image must exist.
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);
void write_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);

// Gallery filters mirroring the satellite scale/time settings. Records of
// other platforms pass through. Empty optional means "all".
struct GalleryFilter {
  std::optional<SatScale> scale;
  std::optional<std::string> time;  // capture_time prefix, e.g. "2022"
  bool accepts(const ImageRecord& r) const;
};

struct AugmentParams {
  int target_height = 224;
  int target_width = 224;
  double flip_prob = 0.5;
  double jitter_strength = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Resize, random horizontal flip, and brightness/contrast/saturation jitter.
// Fully determined by (image, params, rng_key).
Image augment(const Image& image, const AugmentParams& params, std::uint64_t rng_key);

// Training pair: indices of a satellite and a UAV record at one location.
struct PairSample {
  std::size_t sat = 0;
  std::size_t uav = 0;
  geo::GeoPoint geo;
  friend bool operator==(const PairSample&, const PairSample&) = default;
};

// Every (satellite, uav) combination per location, ordered by location id,
// then satellite id, then uav id.
std::vector<PairSample> make_pairs(const Manifest& manifest);

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;  // indices into the pair list
  std::vector<std::string> warnings;
};

// Location-aware epoch partition. Each location's pairs are cut into groups
// of `group_size` (0 keeps a location whole; a leftover single pair rides
// with another location's group) and groups are packed so that,
// where possible, every batch holds same-location pairs for mining positives
// and several locations for negatives. Deterministic per (seed, epoch).
BatchPlan sample_batches(const std::vector<PairSample>& pairs, const Manifest& manifest,
                         std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                         std::size_t group_size = 0);

}  // namespace g2cl::dataset
