#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "g2cl/geo.hpp"
#include "g2cl/matrix.hpp"

namespace g2cl::loss {

// How the in-neighbourhood branch of the adaptive weight scales alpha:
// as_written gives alpha / |h|, inverted gives alpha * |h|.
enum class WeightMode { as_written, inverted };

// Geographic term used with the pair-level InfoNCE.
//   g2cl         - adaptive soft-margin geographic loss (sat, uav, concat parts)
//   triplet      - hinge triplet loss with random positive/negative choice
//   hard_triplet - hinge triplet loss with hard-example selection
enum class Objective { g2cl, triplet, hard_triplet };

std::string to_string(WeightMode m);
std::string to_string(Objective o);
WeightMode parse_weight_mode(const std::string& s);
Objective parse_objective(const std::string& s);

struct LossConfig {
  double temperature = 0.1;
  double alpha = 3.0;
  bool enable_gs = true;
  bool enable_gu = true;
  bool enable_gc = true;
  bool symmetric_infonce = false;
  WeightMode weight_mode = WeightMode::as_written;
  Objective objective = Objective::g2cl;
  double triplet_margin = 0.3;

  void validate() const;
};

// Row i of `sat` and `uav` come from the same training pair.
struct BatchFeatures {
  MatrixD sat;
  MatrixD uav;
  std::vector<std::string> location_ids;
  std::vector<geo::GeoPoint> geo_points;

  Eigen::Index size() const { return sat.rows(); }
};

// Gradients of a scalar loss with respect to the batch embeddings.
struct BatchGradients {
  MatrixD sat;
  MatrixD uav;

  static BatchGradients zeros_like(const BatchFeatures& b);
};

// Loss components of one batch. For the triplet objectives the three part
// slots hold the per-view triplet terms.
struct LossBreakdown {
  double l_p = 0, l_gs = 0, l_gu = 0, l_gc = 0, l_g = 0, total = 0;
  int skipped_anchors = 0;
};

// Euclidean distance. Throws ContractError on a dimension mismatch.
double feature_distance(std::span<const double> a, std::span<const double> b);

// Pair-level InfoNCE: satellite anchors against every UAV row of the batch
// (both directions averaged when symmetric). Adds gradients into `grads`
// when given. Throws ConfigError for temperature <= 0.
double info_nce(const BatchFeatures& batch, double temperature, bool symmetric = false,
                BatchGradients* grads = nullptr);

struct Mined {
  std::optional<double> p_plus;   // farthest same-location row
  std::optional<double> p_minus;  // nearest other-location row
  int plus_index = -1;
  int minus_index = -1;
};

// Hard example mining within one set of embeddings. Ties go to the smallest
// row index.
Mined mine_hard(int anchor, const MatrixD& embeddings, std::span<const std::string> location_ids);

// Adaptive weight for an anchor whose hard negative sits at p_minus_location.
// Throws ContractError if either location is not indexed.
double adaptive_weight(const std::string& anchor_location, const std::string& p_minus_location,
                       const geo::NeighborIndex& index, double alpha, WeightMode mode);

enum class View { satellite, uav, concat };

struct PartResult {
  double loss = 0;
  int skipped = 0;
};

// Mean over usable anchors of softplus(phi * (p_plus - p_minus)), mined within
// the selected view. The concat view mines on [sat_i, uav_i] rows.
PartResult geo_part_loss(View view, const BatchFeatures& batch, const geo::NeighborIndex& index,
                         const LossConfig& config, BatchGradients* grads = nullptr);

// Hinge triplet max(0, d(a,p) - d(a,n) + margin) averaged over usable anchors
// of one view. Without hard mining, positive and negative are drawn uniformly
// using `seed`.
PartResult triplet_part_loss(View view, const BatchFeatures& batch, double margin,
                             bool hard_mining, std::uint64_t seed,
                             BatchGradients* grads = nullptr);

// Sum of the triplet term over the satellite, UAV and concat views.
double baseline_triplet(const BatchFeatures& batch, double margin, bool hard_mining,
                        std::uint64_t seed = 0, BatchGradients* grads = nullptr);

// L_p plus the enabled geographic parts. `seed` only feeds random triplet
// selection.
LossBreakdown total_loss(const BatchFeatures& batch, const geo::NeighborIndex& index,
                         const LossConfig& config, BatchGradients* grads = nullptr,
                         std::uint64_t seed = 0);

// Numerically stable log(1 + exp(x)).
double softplus(double x);

}  // namespace g2cl::loss
