#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "g2cl/dataset.hpp"
#include "g2cl/encoder.hpp"
#include "g2cl/matrix.hpp"

namespace g2cl::eval {

struct RowMeta {
  std::string location_id;
  geo::GeoPoint geo;
  dataset::Platform platform = dataset::Platform::uav;
  friend bool operator==(const RowMeta&, const RowMeta&) = default;
};

// Embeddings with per-row provenance. Row order equals `ids` order.
struct FeatureStore {
  std::vector<std::string> ids;
  MatrixF matrix;  // N x D
  std::vector<RowMeta> meta;

  std::size_t size() const { return ids.size(); }
  int dims() const { return static_cast<int>(matrix.cols()); }
  void validate() const;
};

// Raw float32 row-major matrix at `matrix_path`; JSON sidecar
// {"ids", "dims": [N, D], "meta": [{location_id, lat, lon, platform}]}.
void save_feature_store(const FeatureStore& store, const std::filesystem::path& matrix_path,
                        const std::filesystem::path& sidecar_path);
FeatureStore load_feature_store(const std::filesystem::path& matrix_path,
                                const std::filesystem::path& sidecar_path);

// Single-branch inference over the given records (resize only, no
// augmentation). Throws DataError naming the record when an image is unreadable.
FeatureStore extract_features(const dataset::Manifest& manifest,
                              const std::vector<std::size_t>& record_indices,
                              encoder::Encoder& enc, std::size_t batch_size = 64);
FeatureStore extract_features(const dataset::Manifest& manifest, encoder::Encoder& enc,
                              std::size_t batch_size = 64);

struct RankedItem {
  std::string gallery_id;
  std::string location_id;
  double feature_distance = 0;
  double haversine_m = 0;  // to the query's true position
};

struct RankingResult {
  std::string query_id;
  std::string query_location;
  std::vector<RankedItem> ranked;
};

// Full gallery ordering by feature distance, ties by gallery id.
// Throws ContractError on a dimension mismatch.
RankingResult rank(const FeatureStore& queries, std::size_t query_row, const FeatureStore& gallery);

// All queries; parallel over queries, output in query order.
std::vector<RankingResult> rank_all(const FeatureStore& queries, const FeatureStore& gallery);
std::vector<RankingResult> rank_all_serial(const FeatureStore& queries, const FeatureStore& gallery);

// Fraction of queries with a correct-location item in the top k.
// Throws DataError when a query lacks a truth entry.
double recall_at_k(const std::vector<RankingResult>& results,
                   const std::map<std::string, std::string>& truth, int k);

// Mean over queries of sum_r w_r exp(-d_r / sigma) / sum_r w_r, w_r = k - r + 1,
// d_r the haversine distance of rank r. Throws ContractError when k < 1,
// sigma <= 0, or a list is shorter than k.
double sdm_at_k(const std::vector<RankingResult>& results, int k, double sigma_m);

// Query id -> location id, taken from each ranking's query.
std::map<std::string, std::string> truth_from(const std::vector<RankingResult>& results);

struct EvalReport {
  std::map<int, double> recall;
  std::map<int, double> sdm;
  std::vector<int> ks;
  double sigma_m = 20.0;
  std::size_t num_queries = 0;
  std::size_t gallery_size = 0;
  std::vector<RankingResult> per_query;  // heads, only when requested

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  // One row per K: k,recall,sdm.
  std::string to_csv() const;
};

struct EvalOptions {
  std::vector<int> ks = {1, 3, 5, 10};
  double sigma_m = 20.0;
  dataset::GalleryFilter gallery_filter;
  std::size_t batch_size = 64;
  int keep_heads = 0;  // ranked entries kept per query in the report
};

EvalReport score(const std::vector<RankingResult>& results, std::size_t gallery_size,
                 const EvalOptions& options);

EvalReport evaluate_features(const FeatureStore& queries, const FeatureStore& gallery,
                             const EvalOptions& options);

// Queries: UAV records of `query_manifest`. Gallery: satellite records of
// `gallery_manifest` accepted by the filter.
EvalReport evaluate(const dataset::Manifest& query_manifest,
                    const dataset::Manifest& gallery_manifest, encoder::Encoder& enc,
                    const EvalOptions& options);

}  // namespace g2cl::eval
