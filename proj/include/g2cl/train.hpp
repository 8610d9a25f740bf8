#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "g2cl/dataset.hpp"
#include "g2cl/encoder.hpp"
#include "g2cl/geo.hpp"
#include "g2cl/loss.hpp"

namespace g2cl::train {

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 128;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  loss::LossConfig loss;
  encoder::EncoderConfig encoder;
  dataset::AugmentParams augment;
  int neighbor_k = 8;
  // Same-location pairs kept together per batch group (0 = whole location).
  std::size_t sampler_group = 2;
  int checkpoint_every = 10;  // epochs; 0 disables periodic checkpoints
  double grad_clip = 0.0;     // max global grad norm; 0 disables
  LrSchedule lr_schedule = LrSchedule::constant;
  double warmup_epochs = 0.0;  // linear ramp from 0; 0 disables
  // Satellite subset used to build training pairs.
  dataset::GalleryFilter data_filter;

  void validate() const;
};

// Neighbour index over the manifest's distinct locations.
geo::NeighborIndex precompute_geo(const dataset::Manifest& manifest, int k);

struct EpochSummary {
  int epoch = 0;  // 1-based
  double mean_total = 0;
  double mean_l_p = 0;
  double mean_l_g = 0;
  std::size_t steps = 0;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  nlohmann::json config_echo = nlohmann::json::object();
  // Stop after this many total epochs (simulates an interrupted run).
  std::optional<int> stop_after_epoch;
  std::function<void(const EpochSummary&)> on_epoch;
};

struct TrainResult {
  std::filesystem::path checkpoint;  // final checkpoint
  std::filesystem::path log;         // per-step CSV
  std::vector<EpochSummary> epochs;  // epochs run by this call
  std::vector<loss::LossBreakdown> steps;
};

// AdamW training of the shared encoder on GPS-paired samples. Writes
// <out>/train_log.csv (step,l_p,l_gs,l_gu,l_gc,total,skipped_anchors,lr),
// periodic <out>/checkpoint_epoch<N>.ckpt and the final <out>/checkpoint.ckpt.
// Throws NonFiniteLossError when a step's loss is not finite.
TrainResult train(const TrainConfig& config, const dataset::Manifest& manifest,
                  const TrainOptions& options);

// Learning rate after `progress` epochs of training (fractional, step granular).
double learning_rate_at(const TrainConfig& config, double progress);

// Encoder rebuilt from a checkpoint's config echo and parameters.
std::unique_ptr<encoder::Encoder> load_encoder(const std::filesystem::path& checkpoint);

}  // namespace g2cl::train
