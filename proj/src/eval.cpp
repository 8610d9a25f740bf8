#include "g2cl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "g2cl/error.hpp"
#include "g2cl/kernels.hpp"

namespace g2cl::eval {

namespace fs = std::filesystem;
using nlohmann::json;

void FeatureStore::validate() const {
  if (static_cast<std::size_t>(matrix.rows()) != ids.size() || meta.size() != ids.size())
    throw DataError("feature store: ids, matrix rows and meta disagree in length");
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw DataError("feature store: duplicate id '" + id + "'");
}

void save_feature_store(const FeatureStore& store, const fs::path& matrix_path,
                        const fs::path& sidecar_path) {
  store.validate();
  {
    std::ofstream out(matrix_path, std::ios::binary);
    if (!out) throw DataError("cannot write feature matrix: " + matrix_path.string());
    out.write(reinterpret_cast<const char*>(store.matrix.data()),
              static_cast<std::streamsize>(store.matrix.size() * sizeof(float)));
    if (!out) throw DataError("failed writing feature matrix: " + matrix_path.string());
  }
  json meta = json::array();
  for (const auto& m : store.meta)
    meta.push_back({{"location_id", m.location_id},
                    {"lat", m.geo.lat_deg()},
                    {"lon", m.geo.lon_deg()},
                    {"platform", dataset::to_string(m.platform)}});
  json side = {{"ids", store.ids},
               {"dims", {store.matrix.rows(), store.matrix.cols()}},
               {"meta", std::move(meta)}};
  std::ofstream out(sidecar_path);
  if (!out) throw DataError("cannot write feature sidecar: " + sidecar_path.string());
  out << side.dump(1) << '\n';
}

FeatureStore load_feature_store(const fs::path& matrix_path, const fs::path& sidecar_path) {
  std::ifstream side_in(sidecar_path);
  if (!side_in) throw DataError("cannot open feature sidecar: " + sidecar_path.string());
  FeatureStore store;
  Eigen::Index rows = 0, cols = 0;
  try {
    json side = json::parse(side_in);
    store.ids = side.at("ids").get<std::vector<std::string>>();
    rows = side.at("dims").at(0).get<Eigen::Index>();
    cols = side.at("dims").at(1).get<Eigen::Index>();
    for (const auto& m : side.at("meta"))
      store.meta.push_back({m.at("location_id").get<std::string>(),
                            geo::GeoPoint(m.at("lat").get<double>(), m.at("lon").get<double>()),
                            dataset::parse_platform(m.at("platform").get<std::string>())});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed feature sidecar: ") + e.what());
  }
  store.matrix.resize(rows, cols);
  std::ifstream in(matrix_path, std::ios::binary);
  if (!in) throw DataError("cannot open feature matrix: " + matrix_path.string());
  in.read(reinterpret_cast<char*>(store.matrix.data()),
          static_cast<std::streamsize>(store.matrix.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(store.matrix.size() * sizeof(float)))
    throw DataError("feature matrix size does not match sidecar dims: " + matrix_path.string());
  store.validate();
  return store;
}

FeatureStore extract_features(const dataset::Manifest& manifest,
                              const std::vector<std::size_t>& record_indices,
                              encoder::Encoder& enc, std::size_t batch_size) {
  const auto& cfg = enc.config();
  FeatureStore store;
  store.matrix.resize(static_cast<Eigen::Index>(record_indices.size()), cfg.embedding_dim);
  if (batch_size == 0) batch_size = 1;
  for (std::size_t start = 0; start < record_indices.size(); start += batch_size) {
    const auto end = std::min(record_indices.size(), start + batch_size);
    std::vector<Image> images;
    for (std::size_t i = start; i < end; ++i) {
      const auto& rec = manifest.records()[record_indices[i]];
      Image img;
      try {
        img = read_ppm(manifest.resolve(rec));
      } catch (const DataError& e) {
        throw DataError("record '" + rec.id + "': unreadable image: " + e.what());
      }
      images.push_back(resize_bilinear(img, cfg.input_height, cfg.input_width));
      store.ids.push_back(rec.id);
      store.meta.push_back({rec.location_id, rec.geo, rec.platform});
    }
    const MatrixF emb = enc.encode(images, encoder::Mode::inference);
    store.matrix.middleRows(static_cast<Eigen::Index>(start), emb.rows()) = emb;
  }
  return store;
}

FeatureStore extract_features(const dataset::Manifest& manifest, encoder::Encoder& enc,
                              std::size_t batch_size) {
  std::vector<std::size_t> all(manifest.records().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return extract_features(manifest, all, enc, batch_size);
}

namespace {

bool item_less(const RankedItem& a, const RankedItem& b) {
  if (a.feature_distance != b.feature_distance) return a.feature_distance < b.feature_distance;
  return a.gallery_id < b.gallery_id;
}

RankingResult ranking_from_row(const FeatureStore& queries, std::size_t q,
                               const FeatureStore& gallery, const double* sq_dist) {
  RankingResult r;
  r.query_id = queries.ids[q];
  r.query_location = queries.meta[q].location_id;
  r.ranked.reserve(gallery.size());
  for (std::size_t g = 0; g < gallery.size(); ++g)
    r.ranked.push_back({gallery.ids[g], gallery.meta[g].location_id, std::sqrt(sq_dist[g]),
                        geo::haversine(queries.meta[q].geo, gallery.meta[g].geo)});
  std::sort(r.ranked.begin(), r.ranked.end(), item_less);
  return r;
}

void check_dims(const FeatureStore& queries, const FeatureStore& gallery) {
  if (queries.dims() != gallery.dims())
    throw ContractError("rank: query dim " + std::to_string(queries.dims()) +
                        " != gallery dim " + std::to_string(gallery.dims()));
}

}  // namespace

RankingResult rank(const FeatureStore& queries, std::size_t query_row, const FeatureStore& gallery) {
  check_dims(queries, gallery);
  const int d = gallery.dims();
  const int m = static_cast<int>(gallery.size());
  const Eigen::RowVectorXd q = queries.matrix.row(static_cast<Eigen::Index>(query_row)).cast<double>();
  const MatrixD g = gallery.matrix.cast<double>();
  std::vector<double> dist(static_cast<std::size_t>(m));
  kernels::pairwise_sq_distances<double>({q.data(), static_cast<std::size_t>(d)},
                                         {g.data(), static_cast<std::size_t>(g.size())}, 1, m, d, dist);
  return ranking_from_row(queries, query_row, gallery, dist.data());
}

std::vector<RankingResult> rank_all(const FeatureStore& queries, const FeatureStore& gallery) {
  check_dims(queries, gallery);
  const int n = static_cast<int>(queries.size()), m = static_cast<int>(gallery.size());
  const int d = gallery.dims();
  const MatrixD q = queries.matrix.cast<double>();
  const MatrixD g = gallery.matrix.cast<double>();
  std::vector<double> dist(static_cast<std::size_t>(n) * m);
  kernels::pairwise_sq_distances<double>({q.data(), static_cast<std::size_t>(q.size())},
                                         {g.data(), static_cast<std::size_t>(g.size())}, n, m, d, dist);
  std::vector<RankingResult> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = ranking_from_row(
        queries, static_cast<std::size_t>(i), gallery, dist.data() + static_cast<std::size_t>(i) * m);
  return out;
}

std::vector<RankingResult> rank_all_serial(const FeatureStore& queries,
                                           const FeatureStore& gallery) {
  check_dims(queries, gallery);
  const int n = static_cast<int>(queries.size()), m = static_cast<int>(gallery.size());
  const int d = gallery.dims();
  const MatrixD q = queries.matrix.cast<double>();
  const MatrixD g = gallery.matrix.cast<double>();
  std::vector<double> dist(static_cast<std::size_t>(n) * m);
  kernels::reference::pairwise_sq_distances<double>(
      {q.data(), static_cast<std::size_t>(q.size())}, {g.data(), static_cast<std::size_t>(g.size())},
      n, m, d, dist);
  std::vector<RankingResult> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(ranking_from_row(queries, static_cast<std::size_t>(i), gallery,
                                   dist.data() + static_cast<std::size_t>(i) * m));
  return out;
}

double recall_at_k(const std::vector<RankingResult>& results,
                   const std::map<std::string, std::string>& truth, int k) {
  if (k < 1) throw ContractError("recall_at_k: k must be >= 1");
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    auto it = truth.find(r.query_id);
    if (it == truth.end()) throw DataError("recall_at_k: no truth entry for query '" + r.query_id + "'");
    const auto top = std::min<std::size_t>(static_cast<std::size_t>(k), r.ranked.size());
    for (std::size_t i = 0; i < top; ++i)
      if (r.ranked[i].location_id == it->second) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double sdm_at_k(const std::vector<RankingResult>& results, int k, double sigma_m) {
  if (k < 1) throw ContractError("sdm_at_k: k must be >= 1");
  if (!(sigma_m > 0)) throw ContractError("sdm_at_k: sigma must be > 0");
  if (results.empty()) return 0.0;
  const double wsum = 0.5 * k * (k + 1);
  double total = 0;
  for (const auto& r : results) {
    if (r.ranked.size() < static_cast<std::size_t>(k))
      throw ContractError("sdm_at_k: ranking for '" + r.query_id + "' has " +
                          std::to_string(r.ranked.size()) + " items, need " + std::to_string(k));
    double s = 0;
    for (int i = 0; i < k; ++i)
      s += static_cast<double>(k - i) * std::exp(-r.ranked[static_cast<std::size_t>(i)].haversine_m / sigma_m);
    total += s / wsum;
  }
  return total / static_cast<double>(results.size());
}

std::map<std::string, std::string> truth_from(const std::vector<RankingResult>& results) {
  std::map<std::string, std::string> t;
  for (const auto& r : results) t[r.query_id] = r.query_location;
  return t;
}

json EvalReport::to_json() const {
  json rec = json::object(), sd = json::object();
  for (const auto& [k, v] : recall) rec[std::to_string(k)] = v;
  for (const auto& [k, v] : sdm) sd[std::to_string(k)] = v;
  json j = {{"recall", rec},
            {"sdm", sd},
            {"config", {{"k", ks}, {"sigma_m", sigma_m}}},
            {"num_queries", num_queries},
            {"gallery_size", gallery_size}};
  if (!per_query.empty()) {
    json pq = json::array();
    for (const auto& r : per_query) {
      json ranked = json::array();
      for (const auto& it : r.ranked)
        ranked.push_back({it.gallery_id, it.feature_distance, it.haversine_m});
      pq.push_back({{"query_id", r.query_id}, {"ranked", std::move(ranked)}});
    }
    j["per_query"] = std::move(pq);
  }
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  try {
    for (const auto& [k, v] : j.at("recall").items()) r.recall[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("sdm").items()) r.sdm[std::stoi(k)] = v.get<double>();
    r.ks = j.at("config").at("k").get<std::vector<int>>();
    r.sigma_m = j.at("config").at("sigma_m").get<double>();
    r.num_queries = j.at("num_queries").get<std::size_t>();
    r.gallery_size = j.at("gallery_size").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed eval report: ") + e.what());
  }
  return r;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "k,recall,sdm\n";
  for (int k : ks) out << k << ',' << recall.at(k) << ',' << sdm.at(k) << '\n';
  return out.str();
}

EvalReport score(const std::vector<RankingResult>& results, std::size_t gallery_size,
                 const EvalOptions& options) {
  EvalReport report;
  report.ks = options.ks;
  report.sigma_m = options.sigma_m;
  report.num_queries = results.size();
  report.gallery_size = gallery_size;
  const auto truth = truth_from(results);
  for (int k : options.ks) {
    report.recall[k] = recall_at_k(results, truth, k);
    report.sdm[k] = sdm_at_k(results, k, options.sigma_m);
  }
  if (options.keep_heads > 0)
    for (const auto& r : results) {
      RankingResult head = r;
      head.ranked.resize(std::min<std::size_t>(head.ranked.size(),
                                               static_cast<std::size_t>(options.keep_heads)));
      report.per_query.push_back(std::move(head));
    }
  return report;
}

EvalReport evaluate_features(const FeatureStore& queries, const FeatureStore& gallery,
                             const EvalOptions& options) {
  return score(rank_all(queries, gallery), gallery.size(), options);
}

EvalReport evaluate(const dataset::Manifest& query_manifest,
                    const dataset::Manifest& gallery_manifest, encoder::Encoder& enc,
                    const EvalOptions& options) {
  std::vector<std::size_t> q_idx, g_idx;
  for (std::size_t i = 0; i < query_manifest.records().size(); ++i)
    if (query_manifest.records()[i].platform == dataset::Platform::uav) q_idx.push_back(i);
  for (std::size_t i = 0; i < gallery_manifest.records().size(); ++i) {
    const auto& r = gallery_manifest.records()[i];
    if (r.platform == dataset::Platform::satellite && options.gallery_filter.accepts(r))
      g_idx.push_back(i);
  }
  if (q_idx.empty()) throw DataError("evaluate: query manifest has no UAV records");
  if (g_idx.empty()) throw DataError("evaluate: gallery is empty after filtering");
  const auto queries = extract_features(query_manifest, q_idx, enc, options.batch_size);
  const auto gallery = extract_features(gallery_manifest, g_idx, enc, options.batch_size);
  return evaluate_features(queries, gallery, options);
}

}  // namespace g2cl::eval
