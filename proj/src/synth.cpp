#include "g2cl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "g2cl/error.hpp"
#include "g2cl/random.hpp"

namespace g2cl::synth {

namespace fs = std::filesystem;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double hash01(std::uint64_t key) { return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53; }

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on a square lattice of `cell` meters, one channel.
double value_noise(std::uint64_t seed, double x, double y, double cell, std::uint64_t channel) {
  const double gx = x / cell, gy = y / cell;
  const double fx = std::floor(gx), fy = std::floor(gy);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  auto lattice = [&](std::int64_t a, std::int64_t b) {
    return hash01(mix_keys({seed, static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b), channel}));
  };
  const double tx = smooth(gx - fx), ty = smooth(gy - fy);
  const double v00 = lattice(ix, iy), v10 = lattice(ix + 1, iy);
  const double v01 = lattice(ix, iy + 1), v11 = lattice(ix + 1, iy + 1);
  return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

struct Blob {
  double east, north, radius;  // meters, relative to the location centre
  double rgb[3];
};

// Location-unique detail, keyed to the location id.
std::vector<Blob> location_blobs(std::uint64_t seed, int row, int col) {
  Rng rng(mix_keys({seed, 0xB10B, static_cast<std::uint64_t>(row), static_cast<std::uint64_t>(col)}));
  std::vector<Blob> blobs(3);
  for (auto& b : blobs) {
    b.east = rng.uniform(-9.0, 9.0);
    b.north = rng.uniform(-9.0, 9.0);
    b.radius = rng.uniform(2.0, 3.5);
    // Saturated colour: one strong channel, one weak, one random.
    const auto hi = rng.below(3);
    const auto lo = (hi + 1 + rng.below(2)) % 3;
    for (int c = 0; c < 3; ++c) b.rgb[c] = rng.uniform(0.3, 0.7);
    b.rgb[hi] = rng.uniform(0.85, 1.0);
    b.rgb[lo] = rng.uniform(0.0, 0.15);
  }
  return blobs;
}

struct View {
  double center_east, center_north;  // world meters
  double footprint_m;
};

// Scene colour at a world position (meters east/north of the grid origin).
void scene_color(std::uint64_t seed, double east, double north, double loc_east, double loc_north,
                 const std::vector<Blob>& blobs, double out[3]) {
  for (int c = 0; c < 3; ++c) {
    const double coarse = value_noise(seed, east, north, 45.0, static_cast<std::uint64_t>(c));
    const double fine = value_noise(seed ^ 0xF1E, east, north, 12.0, static_cast<std::uint64_t>(c) + 7);
    out[c] = 0.2 + 0.45 * coarse + 0.2 * fine;
  }
  for (const auto& b : blobs) {
    const double dx = east - (loc_east + b.east), dy = north - (loc_north + b.north);
    const double dist = std::sqrt(dx * dx + dy * dy);
    const double a = 0.5 * std::clamp((b.radius - dist) / 0.8, 0.0, 1.0);
    if (a <= 0) continue;
    for (int c = 0; c < 3; ++c) out[c] = out[c] * (1 - a) + b.rgb[c] * a;
  }
}

Image render(std::uint64_t seed, int size, const View& view, double loc_east, double loc_north,
             const std::vector<Blob>& blobs) {
  Image img(size, size);
  const double px = view.footprint_m / size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double e = view.center_east + (x + 0.25 + 0.5 * sx - 0.5 * size) * px;
          const double n = view.center_north - (y + 0.25 + 0.5 * sy - 0.5 * size) * px;
          double c[3];
          scene_color(seed, e, n, loc_east, loc_north, blobs, c);
          for (int k = 0; k < 3; ++k) acc[k] += 0.25 * c[k];
        }
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = static_cast<float>(acc[k]);
    }
  return img;
}

Image box_blur(const Image& src) {
  Image dst(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float acc = 0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= src.height || xx < 0 || xx >= src.width) continue;
            acc += src.at(yy, xx, c);
            ++n;
          }
        dst.at(y, x, c) = acc / static_cast<float>(n);
      }
  return dst;
}

double sat_footprint(dataset::SatScale s) {
  switch (s) {
    case dataset::SatScale::small: return 44.0;
    case dataset::SatScale::middle: return 52.0;
    case dataset::SatScale::big: return 60.0;
  }
  return 52.0;
}

// Per-epoch imagery style: channel gains plus optional blur.
void restyle_satellite(Image& img, const std::string& time, std::uint64_t key) {
  Rng rng(key);
  const std::uint64_t t = fnv1a64(time.data(), time.size());
  Rng style(t);
  double gain[3], shift[3];
  for (int c = 0; c < 3; ++c) {
    gain[c] = style.uniform(0.8, 1.2);
    shift[c] = style.uniform(-0.1, 0.1) + rng.uniform(-0.05, 0.05);
  }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(std::clamp(img.at(y, x, c) * gain[c] + shift[c], 0.0, 1.0));
  if (style.uniform() < 0.5) img = box_blur(img);
}

void add_sensor_noise(Image& img, std::uint64_t key, double amplitude) {
  Rng rng(key);
  for (auto& v : img.data)
    v = static_cast<float>(std::clamp(v + amplitude * (2.0 * rng.uniform() - 1.0), 0.0, 1.0));
}

std::string fmt_alt(double alt) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", alt);
  return buf;
}

struct LocationOutput {
  std::vector<dataset::ImageRecord> sats, uavs, queries;
};

}  // namespace

void SynthConfig::validate() const {
  if (grid_rows < 1 || grid_cols < 1) throw ConfigError("synth: grid dimensions must be positive");
  if (grid_rows * grid_cols < 4) throw ConfigError("synth: grid needs at least 4 locations");
  if (!(spacing_m > 0)) throw ConfigError("synth: spacing_m must be > 0");
  if (image_size < 8) throw ConfigError("synth: image_size must be >= 8");
  if (uav_altitudes.empty() || sat_scales.empty() || sat_times.empty())
    throw ConfigError("synth: altitude, scale and time lists must be non-empty");
  for (double a : uav_altitudes)
    if (!(a > 0)) throw ConfigError("synth: altitudes must be positive");
  if (query_views < 0) throw ConfigError("synth: query_views must be >= 0");
}

std::string location_id(int row, int col) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "L%03d_%03d", row, col);
  return buf;
}

geo::GeoPoint location_point(const SynthConfig& config, int row, int col) {
  return geo::offset_meters(config.origin, col * config.spacing_m, row * config.spacing_m);
}

SynthOutput generate(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  const int n = config.grid_rows * config.grid_cols;
  std::vector<LocationOutput> per_loc(static_cast<std::size_t>(n));
  std::vector<std::string> failures(static_cast<std::size_t>(n));

#pragma omp parallel for schedule(dynamic, 1)
  for (int li = 0; li < n; ++li) {
    const int row = li / config.grid_cols, col = li % config.grid_cols;
    auto& out = per_loc[static_cast<std::size_t>(li)];
    try {
      const std::string loc = location_id(row, col);
      const geo::GeoPoint gp = location_point(config, row, col);
      const double le = col * config.spacing_m, ln = row * config.spacing_m;
      const auto blobs = location_blobs(config.seed, row, col);
      const auto key = [&](std::uint64_t a, std::uint64_t b) {
        return mix_keys({config.seed, static_cast<std::uint64_t>(li), a, b});
      };

      for (std::size_t si = 0; si < config.sat_scales.size(); ++si)
        for (std::size_t ti = 0; ti < config.sat_times.size(); ++ti) {
          const auto scale = config.sat_scales[si];
          const auto& time = config.sat_times[ti];
          Image img = render(config.seed, config.image_size, {le, ln, sat_footprint(scale)}, le, ln, blobs);
          restyle_satellite(img, time, key(1, si * 131 + ti));
          dataset::ImageRecord r;
          r.id = loc + "_sat_" + dataset::to_string(scale) + "_" + time;
          r.platform = dataset::Platform::satellite;
          r.location_id = loc;
          r.geo = gp;
          r.scale = scale;
          r.capture_time = time;
          r.uri = "images/" + r.id + ".ppm";
          write_ppm(out_dir / r.uri, img);
          out.sats.push_back(std::move(r));
        }

      auto uav_view = [&](double alt, std::uint64_t k, const std::string& id, auto& sink) {
        Rng rng(k);
        const double fp = alt * 0.5 * rng.uniform(0.95, 1.05);
        const View v{le + rng.uniform(-4.0, 4.0), ln + rng.uniform(-4.0, 4.0), fp};
        Image img = render(config.seed, config.image_size, v, le, ln, blobs);
        add_sensor_noise(img, splitmix64(k), 0.06);
        dataset::ImageRecord r;
        r.id = id;
        r.platform = dataset::Platform::uav;
        r.location_id = loc;
        r.geo = gp;
        r.altitude_m = alt;
        r.uri = "images/" + id + ".ppm";
        write_ppm(out_dir / r.uri, img);
        sink.push_back(std::move(r));
      };
      for (std::size_t ai = 0; ai < config.uav_altitudes.size(); ++ai) {
        const double alt = config.uav_altitudes[ai];
        uav_view(alt, key(2, ai), loc + "_uav_" + fmt_alt(alt), out.uavs);
        for (int q = 0; q < config.query_views; ++q)
          uav_view(alt, key(3, ai * 1009 + static_cast<std::uint64_t>(q)),
                   loc + "_q" + std::to_string(q) + "_uav_" + fmt_alt(alt), out.queries);
      }
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(li)] = e.what();
    }
  }
  for (const auto& f : failures)
    if (!f.empty()) throw DataError("synth: " + f);

  std::vector<dataset::ImageRecord> train, queries;
  SynthOutput result;
  for (auto& lo : per_loc) {
    result.satellite_images += lo.sats.size();
    result.uav_images += lo.uavs.size();
    result.query_images += lo.queries.size();
    for (auto& r : lo.sats) train.push_back(std::move(r));
    for (auto& r : lo.uavs) train.push_back(std::move(r));
    for (auto& r : lo.queries) queries.push_back(std::move(r));
  }
  result.locations = static_cast<std::size_t>(n);
  result.manifest_path = out_dir / "manifest.jsonl";
  result.queries_path = out_dir / "queries.jsonl";
  dataset::write_manifest(result.manifest_path, train);
  dataset::write_manifest(result.queries_path, queries);
  return result;
}

eval::FeatureStore oracle_embeddings(const dataset::Manifest& manifest, int dims) {
  if (dims < 4) throw ConfigError("oracle_embeddings: dims must be >= 4");
  eval::FeatureStore store;
  const auto& recs = manifest.records();
  store.matrix = MatrixF::Zero(static_cast<Eigen::Index>(recs.size()), dims);
  if (recs.empty()) return store;

  double lat0 = 90, lon0 = 180, lat1 = -90, lon1 = -180;
  for (const auto& r : recs) {
    lat0 = std::min(lat0, r.geo.lat_deg());
    lon0 = std::min(lon0, r.geo.lon_deg());
    lat1 = std::max(lat1, r.geo.lat_deg());
    lon1 = std::max(lon1, r.geo.lon_deg());
  }
  const double coslat = std::cos(0.5 * (lat0 + lat1) * kDegToRad);
  auto east = [&](double lon) { return (lon - lon0) * kDegToRad * geo::kEarthRadiusM * coslat; };
  auto north = [&](double lat) { return (lat - lat0) * kDegToRad * geo::kEarthRadiusM; };
  const double extent = std::max({east(lon1), north(lat1), 1.0});
  // Flat torus patch: |u(p) - u(q)|^2 = 2 - cos(dx/a) - cos(dy/a), which is
  // isotropic to fourth order; a large radius keeps the anisotropy far below
  // the gaps between distinct grid distances.
  const double a = 20.0 * extent;
  const double s = 1.0 / std::numbers::sqrt2;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const double x = east(recs[i].geo.lon_deg()) / a, y = north(recs[i].geo.lat_deg()) / a;
    auto row = store.matrix.row(static_cast<Eigen::Index>(i));
    row(0) = static_cast<float>(s * std::cos(x));
    row(1) = static_cast<float>(s * std::sin(x));
    row(2) = static_cast<float>(s * std::cos(y));
    row(3) = static_cast<float>(s * std::sin(y));
    store.ids.push_back(recs[i].id);
    store.meta.push_back({recs[i].location_id, recs[i].geo, recs[i].platform});
  }
  return store;
}

}  // namespace g2cl::synth
