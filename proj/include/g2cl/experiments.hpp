#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "g2cl/config.hpp"
#include "g2cl/dataset.hpp"
#include "g2cl/eval.hpp"
#include "g2cl/train.hpp"

namespace g2cl::experiments {

using Logger = std::function<void(const std::string&)>;

// A small result table written as both CSV and JSON.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  std::string to_csv() const;
  nlohmann::json to_json() const;  // array of {column: value}
  // Writes <dir>/<stem>.csv and <dir>/<stem>.json.
  void write(const std::filesystem::path& dir, const std::string& stem) const;
};

struct RunRecord {
  std::uint64_t config_hash = 0;
  std::filesystem::path run_dir;
  std::vector<train::EpochSummary> epochs;
  eval::EvalReport report;
  bool from_cache = false;
};

// Trains (or reuses the cached model for the same config hash under
// `cache_dir`) and evaluates the queries against the configured gallery.
RunRecord train_and_evaluate(const config::RunConfig& config, const dataset::Manifest& train_manifest,
                             const dataset::Manifest& queries, const std::filesystem::path& cache_dir,
                             const Logger& log = {});

struct AblationRow {
  int index = 0;  // 1-based, table order
  std::string name;
  bool gs = false, gu = false, gc = false;
};

// Baseline, each part alone, the three pairs, then all three.
std::vector<AblationRow> ablation_rows();

struct AblationResult {
  Table per_seed;
  Table summary;  // medians over seeds
  std::vector<std::vector<RunRecord>> runs;  // [row][seed]
};

AblationResult run_ablate(const config::RunConfig& config, const dataset::Manifest& train_manifest,
                          const dataset::Manifest& queries, const std::filesystem::path& work_dir,
                          const Logger& log = {});

struct SweepResult {
  Table table;
  double recall1_spread = 0;  // max - min Recall@1 across alphas
  std::vector<RunRecord> runs;
};

// One run per alpha at the config's first seed.
SweepResult run_sweep_alpha(const config::RunConfig& config, const dataset::Manifest& train_manifest,
                            const dataset::Manifest& queries, const std::filesystem::path& work_dir,
                            const Logger& log = {});

struct BaselineRow {
  std::string name;
  loss::Objective objective;
  bool view_terms;  // per-view terms (satellite, UAV, concat) switched on
};

// L_p alone, L_p + triplet, L_p + hard-mined triplet, full G2CL.
std::vector<BaselineRow> baseline_rows();

struct BaselineResult {
  Table per_seed;
  Table summary;
  std::vector<std::vector<RunRecord>> runs;  // [row][seed]
};

BaselineResult run_baselines(const config::RunConfig& config, const dataset::Manifest& train_manifest,
                             const dataset::Manifest& queries, const std::filesystem::path& work_dir,
                             const Logger& log = {});

double median(std::vector<double> values);

}  // namespace g2cl::experiments
