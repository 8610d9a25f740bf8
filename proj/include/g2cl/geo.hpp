#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace g2cl::geo {

// Mean Earth radius in meters.
inline constexpr double kEarthRadiusM = 6371000.0;

// WGS-84 latitude/longitude in decimal degrees. Construction validates range.
class GeoPoint {
 public:
  GeoPoint() = default;
  GeoPoint(double lat_deg, double lon_deg);

  double lat_deg() const { return lat_; }
  double lon_deg() const { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

// Great-circle distance in meters on a sphere of the given radius.
double haversine(const GeoPoint& a, const GeoPoint& b, double radius_m = kEarthRadiusM);

struct Neighbor {
  std::string id;
  double distance_m = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct Location {
  std::string id;
  GeoPoint point;
};

// Per-location geographic neighbour lists, each sorted by ascending haversine
// distance with ties broken by ascending location id. Zero-distance locations
// are never neighbours. Immutable once built.
class NeighborIndex {
 public:
  NeighborIndex() = default;

  int k() const { return k_; }
  double radius_m() const { return radius_m_; }
  std::size_t size() const { return entries_.size(); }

  bool contains(const std::string& location_id) const { return entries_.count(location_id) > 0; }

  // Throws ContractError for an unknown location.
  const std::vector<Neighbor>& neighbors(const std::string& location_id) const;

  // Distance to `neighbor_id` if it belongs to the anchor's set.
  std::optional<double> neighbor_distance(const std::string& anchor_id,
                                          const std::string& neighbor_id) const;

  const std::map<std::string, std::vector<Neighbor>>& entries() const { return entries_; }

  nlohmann::json to_json() const;
  static NeighborIndex from_json(const nlohmann::json& doc);

  friend bool operator==(const NeighborIndex&, const NeighborIndex&) = default;

 private:
  friend NeighborIndex build_neighbor_index(std::span<const Location>, int, double);
  friend NeighborIndex build_neighbor_index_serial(std::span<const Location>, int, double);

  int k_ = 0;
  double radius_m_ = kEarthRadiusM;
  std::map<std::string, std::vector<Neighbor>> entries_;
};

// Builds the index. Anchors are processed in parallel (OpenMP).
// Throws ConfigError when k < 1, ids repeat, or fewer than two distinct
// coordinates exist.
NeighborIndex build_neighbor_index(std::span<const Location> locations, int k,
                                   double radius_m = kEarthRadiusM);

// Single-threaded reference path of the same computation.
NeighborIndex build_neighbor_index_serial(std::span<const Location> locations, int k,
                                          double radius_m = kEarthRadiusM);

// h(anchor, hard_negative) / min over the anchor's neighbour set. Always >= 1.
// Throws ContractError when hard_negative is not in the anchor's set.
double neighbor_norm(const std::string& anchor_id, const std::string& hard_negative_id,
                     const NeighborIndex& index);

// Local equirectangular offset: moves `origin` by (east, north) meters.
GeoPoint offset_meters(const GeoPoint& origin, double east_m, double north_m,
                       double radius_m = kEarthRadiusM);

}  // namespace g2cl::geo
