#include "g2cl/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "g2cl/error.hpp"

namespace g2cl::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_inputs(std::span<const Location> locations, int k) {
  if (k < 1) throw ConfigError("neighbor index: k must be >= 1, got " + std::to_string(k));
  std::set<std::string> ids;
  std::set<std::pair<double, double>> coords;
  for (const auto& loc : locations) {
    if (!ids.insert(loc.id).second)
      throw ConfigError("neighbor index: duplicate location id '" + loc.id + "'");
    coords.emplace(loc.point.lat_deg(), loc.point.lon_deg());
  }
  if (coords.size() < 2)
    throw ConfigError("neighbor index: need at least 2 distinct coordinates, got " +
                      std::to_string(coords.size()));
}

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  if (a.distance_m != b.distance_m) return a.distance_m < b.distance_m;
  return a.id < b.id;
}

std::vector<Neighbor> neighbors_of(std::span<const Location> locations, std::size_t anchor, int k,
                                   double radius_m) {
  std::vector<Neighbor> cands;
  cands.reserve(locations.size());
  for (std::size_t j = 0; j < locations.size(); ++j) {
    if (j == anchor) continue;
    double d = haversine(locations[anchor].point, locations[j].point, radius_m);
    if (d == 0.0) continue;
    cands.push_back({locations[j].id, d});
  }
  auto take = std::min<std::size_t>(static_cast<std::size_t>(k), cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                    neighbor_less);
  cands.resize(take);
  return cands;
}

}  // namespace

GeoPoint::GeoPoint(double lat_deg, double lon_deg) : lat_(lat_deg), lon_(lon_deg) {
  if (!(lat_deg >= -90.0 && lat_deg <= 90.0))
    throw ContractError("latitude out of range [-90, 90]: " + std::to_string(lat_deg));
  if (!(lon_deg >= -180.0 && lon_deg <= 180.0))
    throw ContractError("longitude out of range [-180, 180]: " + std::to_string(lon_deg));
}

double haversine(const GeoPoint& a, const GeoPoint& b, double radius_m) {
  const double lat1 = a.lat_deg() * kDegToRad;
  const double lat2 = b.lat_deg() * kDegToRad;
  const double dlat = lat2 - lat1;
  const double dlon = (b.lon_deg() - a.lon_deg()) * kDegToRad;
  const double s_lat = std::sin(0.5 * dlat);
  const double s_lon = std::sin(0.5 * dlon);
  double h = s_lat * s_lat + std::cos(lat1) * std::cos(lat2) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * radius_m * std::asin(std::sqrt(h));
}

const std::vector<Neighbor>& NeighborIndex::neighbors(const std::string& location_id) const {
  auto it = entries_.find(location_id);
  if (it == entries_.end())
    throw ContractError("neighbor index: unknown location id '" + location_id + "'");
  return it->second;
}

std::optional<double> NeighborIndex::neighbor_distance(const std::string& anchor_id,
                                                       const std::string& neighbor_id) const {
  for (const auto& n : neighbors(anchor_id))
    if (n.id == neighbor_id) return n.distance_m;
  return std::nullopt;
}

nlohmann::json NeighborIndex::to_json() const {
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [id, list] : entries_) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& n : list) arr.push_back(nlohmann::json::array({n.id, n.distance_m}));
    entries[id] = std::move(arr);
  }
  return {{"version", 1}, {"k", k_}, {"radius_m", radius_m_}, {"entries", std::move(entries)}};
}

NeighborIndex NeighborIndex::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("version").get<int>() != 1) throw DataError("neighbor index: unsupported version");
    NeighborIndex index;
    index.k_ = doc.at("k").get<int>();
    index.radius_m_ = doc.at("radius_m").get<double>();
    for (const auto& [id, arr] : doc.at("entries").items()) {
      auto& list = index.entries_[id];
      for (const auto& pair : arr)
        list.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
    }
    return index;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("neighbor index: malformed document: ") + e.what());
  }
}

NeighborIndex build_neighbor_index(std::span<const Location> locations, int k, double radius_m) {
  check_inputs(locations, k);
  std::vector<std::vector<Neighbor>> lists(locations.size());
  const auto n = static_cast<std::ptrdiff_t>(locations.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    lists[static_cast<std::size_t>(i)] =
        neighbors_of(locations, static_cast<std::size_t>(i), k, radius_m);

  NeighborIndex index;
  index.k_ = k;
  index.radius_m_ = radius_m;
  for (std::size_t i = 0; i < locations.size(); ++i)
    index.entries_.emplace(locations[i].id, std::move(lists[i]));
  return index;
}

NeighborIndex build_neighbor_index_serial(std::span<const Location> locations, int k,
                                          double radius_m) {
  check_inputs(locations, k);
  NeighborIndex index;
  index.k_ = k;
  index.radius_m_ = radius_m;
  for (std::size_t i = 0; i < locations.size(); ++i)
    index.entries_.emplace(locations[i].id, neighbors_of(locations, i, k, radius_m));
  return index;
}

double neighbor_norm(const std::string& anchor_id, const std::string& hard_negative_id,
                     const NeighborIndex& index) {
  const auto& list = index.neighbors(anchor_id);
  auto it = std::find_if(list.begin(), list.end(),
                         [&](const Neighbor& n) { return n.id == hard_negative_id; });
  if (it == list.end())
    throw ContractError("neighbor_norm: '" + hard_negative_id + "' is not in the neighbour set of '" +
                        anchor_id + "'");
  // Lists are sorted, so the front holds the minimum distance.
  return it->distance_m / list.front().distance_m;
}

GeoPoint offset_meters(const GeoPoint& origin, double east_m, double north_m, double radius_m) {
  const double lat = origin.lat_deg() + north_m / radius_m / kDegToRad;
  const double lon =
      origin.lon_deg() + east_m / (radius_m * std::cos(origin.lat_deg() * kDegToRad)) / kDegToRad;
  return {lat, lon};
}

}  // namespace g2cl::geo
