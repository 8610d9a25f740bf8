#include "g2cl/dataset.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "g2cl/error.hpp"
#include "g2cl/random.hpp"

namespace g2cl::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Platform p) { return p == Platform::satellite ? "satellite" : "uav"; }

std::string to_string(SatScale s) {
  switch (s) {
    case SatScale::small: return "small";
    case SatScale::middle: return "middle";
    case SatScale::big: return "big";
  }
  return "?";
}

Platform parse_platform(const std::string& s) {
  if (s == "satellite") return Platform::satellite;
  if (s == "uav") return Platform::uav;
  throw DataError("unknown platform '" + s + "'");
}

SatScale parse_scale(const std::string& s) {
  if (s == "small") return SatScale::small;
  if (s == "middle") return SatScale::middle;
  if (s == "big") return SatScale::big;
  throw DataError("unknown satellite scale '" + s + "'");
}

Manifest::Manifest(std::vector<ImageRecord> records, fs::path base_dir)
    : records_(std::move(records)), base_dir_(std::move(base_dir)) {
  validate_and_group(false);
}

Manifest::Manifest(std::vector<ImageRecord> records, fs::path base_dir, bool allow_empty)
    : records_(std::move(records)), base_dir_(std::move(base_dir)) {
  validate_and_group(allow_empty);
}

void Manifest::validate_and_group(bool allow_empty) {
  if (records_.empty() && !allow_empty) throw DataError("empty manifest");
  static const std::regex iso_date(R"(^\d{4}(-\d{2}(-\d{2})?)?$)");
  std::map<std::string, geo::GeoPoint> location_geo;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.id.empty()) throw DataError("record " + std::to_string(i) + ": empty id");
    if (!by_id_.emplace(r.id, i).second) throw DataError("duplicate record id '" + r.id + "'");
    if (r.location_id.empty()) throw DataError("record '" + r.id + "': empty location_id");
    if (r.platform == Platform::uav && r.scale)
      throw DataError("record '" + r.id + "': uav record carries a satellite scale");
    if (r.platform == Platform::satellite && r.altitude_m)
      throw DataError("record '" + r.id + "': satellite record carries an altitude");
    if (r.altitude_m && *r.altitude_m < 0.0)
      throw DataError("record '" + r.id + "': negative altitude");
    if (r.capture_time && !std::regex_match(*r.capture_time, iso_date))
      throw DataError("record '" + r.id + "': capture time is not an ISO-8601 date");
    auto [it, inserted] = location_geo.emplace(r.location_id, r.geo);
    if (!inserted && !(it->second == r.geo))
      throw DataError("location '" + r.location_id + "' has inconsistent GPS (record '" + r.id +
                      "')");
    auto& group = groups_[r.location_id];
    (r.platform == Platform::satellite ? group.satellite : group.uav).push_back(i);
  }
}

const ImageRecord* Manifest::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

std::vector<geo::Location> Manifest::locations() const {
  std::vector<geo::Location> out;
  out.reserve(groups_.size());
  for (const auto& [id, g] : groups_) {
    std::size_t any = g.satellite.empty() ? g.uav.front() : g.satellite.front();
    out.push_back({id, records_[any].geo});
  }
  return out;
}

namespace {

ImageRecord parse_record(const json& j, std::size_t line_no) {
  auto where = [&] { return "manifest line " + std::to_string(line_no); };
  if (!j.is_object()) throw DataError(where() + ": not a JSON object");
  static const std::set<std::string> known = {"id",     "platform", "location_id", "lat", "lon",
                                              "alt_m", "scale",    "time",        "uri"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw DataError(where() + ": unknown field '" + key + "'");
  ImageRecord r;
  try {
    r.id = j.at("id").get<std::string>();
  } catch (const json::exception&) {
    throw DataError(where() + ": missing or non-string 'id'");
  }
  auto field_error = [&](const std::string& what) {
    return DataError("record '" + r.id + "': " + what);
  };
  try {
    r.platform = parse_platform(j.at("platform").get<std::string>());
    r.location_id = j.at("location_id").get<std::string>();
    double lat = j.at("lat").get<double>();
    double lon = j.at("lon").get<double>();
    try {
      r.geo = geo::GeoPoint(lat, lon);
    } catch (const ContractError& e) {
      throw field_error(e.what());
    }
    if (j.contains("alt_m") && !j["alt_m"].is_null()) r.altitude_m = j["alt_m"].get<double>();
    if (j.contains("scale") && !j["scale"].is_null())
      r.scale = parse_scale(j["scale"].get<std::string>());
    if (j.contains("time") && !j["time"].is_null()) r.capture_time = j["time"].get<std::string>();
    r.uri = j.at("uri").get<std::string>();
  } catch (const json::exception& e) {
    throw field_error(std::string("schema violation: ") + e.what());
  } catch (const DataError& e) {
    if (std::string(e.what()).rfind("record '", 0) == 0) throw;
    throw field_error(e.what());
  }
  return r;
}

json record_to_json(const ImageRecord& r) {
  json j = {{"id", r.id},
            {"platform", to_string(r.platform)},
            {"location_id", r.location_id},
            {"lat", r.geo.lat_deg()},
            {"lon", r.geo.lon_deg()}};
  if (r.altitude_m) j["alt_m"] = *r.altitude_m;
  if (r.scale) j["scale"] = to_string(*r.scale);
  if (r.capture_time) j["time"] = *r.capture_time;
  j["uri"] = r.uri;
  return j;
}

}  // namespace

Manifest load_manifest(const fs::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  std::vector<ImageRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    records.push_back(parse_record(j, line_no));
  }
  Manifest m(std::move(records), path.parent_path());
  if (check_files)
    for (const auto& r : m.records())
      if (!fs::exists(m.resolve(r)))
        throw DataError("record '" + r.id + "': missing image file " + m.resolve(r).string());
  return m;
}

void write_manifest(const fs::path& path, const std::vector<ImageRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
  if (!out) throw DataError("failed writing manifest: " + path.string());
}

bool GalleryFilter::accepts(const ImageRecord& r) const {
  if (r.platform != Platform::satellite) return true;
  if (scale && r.scale != scale) return false;
  if (time && (!r.capture_time || r.capture_time->rfind(*time, 0) != 0)) return false;
  return true;
}

void AugmentParams::validate() const {
  if (target_height <= 0 || target_width <= 0)
    throw ConfigError("augment: target size must be positive");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
    throw ConfigError("augment: flip_prob must be in [0, 1]");
  if (!(jitter_strength >= 0.0)) throw ConfigError("augment: jitter_strength must be >= 0");
}

Image augment(const Image& image, const AugmentParams& params, std::uint64_t rng_key) {
  Rng rng(mix_keys({params.seed, rng_key}));
  Image out = resize_bilinear(image, params.target_height, params.target_width);
  const bool flip = rng.uniform() < params.flip_prob;
  const double s = params.jitter_strength;
  const float brightness = static_cast<float>(1.0 + s * (2.0 * rng.uniform() - 1.0));
  const float contrast = static_cast<float>(1.0 + s * (2.0 * rng.uniform() - 1.0));
  const float saturation = static_cast<float>(1.0 + s * (2.0 * rng.uniform() - 1.0));
  if (flip) out = flip_horizontal(out);
  if (s == 0.0) return out;

  for (auto& v : out.data) v *= brightness;
  double mean = 0.0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      mean += 0.299 * out.at(y, x, 0) + 0.587 * out.at(y, x, 1) + 0.114 * out.at(y, x, 2);
  const auto fmean = static_cast<float>(mean / (static_cast<double>(out.height) * out.width));
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      float px[3];
      for (int c = 0; c < 3; ++c) px[c] = fmean + (out.at(y, x, c) - fmean) * contrast;
      float gray = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = std::clamp(gray + (px[c] - gray) * saturation, 0.0f, 1.0f);
    }
  }
  return out;
}

std::vector<PairSample> make_pairs(const Manifest& manifest) {
  const auto& recs = manifest.records();
  auto by_id = [&](std::size_t a, std::size_t b) { return recs[a].id < recs[b].id; };
  std::vector<PairSample> pairs;
  for (const auto& [loc, group] : manifest.correspondence()) {
    if (!group.uav.empty() && group.satellite.empty())
      throw DataError("location '" + loc + "' has UAV records but no satellite record");
    auto sats = group.satellite;
    auto uavs = group.uav;
    std::sort(sats.begin(), sats.end(), by_id);
    std::sort(uavs.begin(), uavs.end(), by_id);
    for (auto s : sats)
      for (auto u : uavs) pairs.push_back({s, u, recs[s].geo});
  }
  return pairs;
}

BatchPlan sample_batches(const std::vector<PairSample>& pairs, const Manifest& manifest,
                         std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                         std::size_t group_size) {
  if (batch_size < 2)
    throw ConfigError("batch_size must be >= 2 (hard mining needs a negative), got " +
                      std::to_string(batch_size));
  if (group_size == 1) throw ConfigError("sample_batches: group_size 1 leaves every pair without a positive");
  if (pairs.empty()) throw DataError("sample_batches: no pairs");

  BatchPlan plan;
  std::map<std::string, std::vector<std::size_t>> by_location;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    by_location[manifest.records()[pairs[i].sat].location_id].push_back(i);
  if (by_location.size() == 1)
    plan.warnings.push_back("all pairs share one location; geographic losses get no negatives");

  Rng rng(mix_keys({seed, epoch, 0x5A3D1E}));
  auto location_of_pair = [&](std::size_t i) -> const std::string& {
    return manifest.records()[pairs[i].sat].location_id;
  };

  std::deque<std::vector<std::size_t>> pending;
  std::vector<std::size_t> strays;
  for (auto& [_, idx] : by_location) {
    shuffle(idx.begin(), idx.end(), rng);
    if (group_size == 0 || idx.size() <= group_size) {
      pending.push_back(std::move(idx));
      continue;
    }
    for (std::size_t start = 0; start < idx.size(); start += group_size) {
      const auto end = std::min(idx.size(), start + group_size);
      if (end - start == 1) {
        strays.push_back(idx[start]);
        continue;
      }
      pending.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                           idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  shuffle(pending.begin(), pending.end(), rng);

  // A lone leftover pair has no positive of its own. It rides with a full
  // group of another location, one stray per group, so it still serves as an
  // InfoNCE row without putting three pairs of one location in a batch (two
  // same-image negatives per row cost far more than the stray's positive is
  // worth). Only when no such group is left does it join its own location.
  shuffle(strays.begin(), strays.end(), rng);
  std::size_t cursor = 0;
  for (auto s : strays) {
    const auto& loc = location_of_pair(s);
    bool placed = false;
    for (std::size_t n = 0; n < pending.size() && !placed; ++n) {
      auto& g = pending[(cursor + n) % pending.size()];
      if (g.size() == group_size && location_of_pair(g.front()) != loc) {
        g.push_back(s);
        cursor = (cursor + n + 1) % pending.size();
        placed = true;
      }
    }
    for (std::size_t n = 0; n < pending.size() && !placed; ++n)
      if (location_of_pair(pending[n].front()) == loc) {
        pending[n].push_back(s);
        placed = true;
      }
  }

  // A placement is "clean" when it does not strand a single pair of a
  // location at either side of a batch boundary.
  auto clean = [](std::size_t size, std::size_t room) {
    if (size <= room) return size > 1 || room == 1;
    return room >= 2 && size - room >= 2;
  };

  auto overlaps = [&](const std::vector<std::size_t>& g, const std::set<std::string>& in) {
    return std::any_of(g.begin(), g.end(), [&](std::size_t i) { return in.count(location_of_pair(i)) > 0; });
  };

  // Groups of a location already in the current batch are deferred so the
  // in-batch negatives are not silently extra positives.
  std::vector<std::size_t> stream;
  stream.reserve(pairs.size());
  std::set<std::string> in_batch;
  while (!pending.empty()) {
    if (stream.size() % batch_size == 0) in_batch.clear();
    const std::size_t room = batch_size - stream.size() % batch_size;
    auto pick = std::find_if(pending.begin(), pending.end(), [&](const auto& g) {
      return clean(g.size(), room) && !overlaps(g, in_batch);
    });
    if (pick == pending.end())
      pick = std::find_if(pending.begin(), pending.end(),
                          [&](const auto& g) { return clean(g.size(), room); });
    if (pick == pending.end()) pick = pending.begin();
    auto group = std::move(*pick);
    pending.erase(pick);
    for (auto i : group) in_batch.insert(location_of_pair(i));
    if (group.size() <= room) {
      stream.insert(stream.end(), group.begin(), group.end());
    } else {
      stream.insert(stream.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(room));
      pending.emplace_front(group.begin() + static_cast<std::ptrdiff_t>(room), group.end());
    }
  }

  for (std::size_t start = 0; start < stream.size(); start += batch_size) {
    auto end = std::min(stream.size(), start + batch_size);
    plan.batches.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(start),
                              stream.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

}  // namespace g2cl::dataset
