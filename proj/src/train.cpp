#include "g2cl/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "g2cl/checkpoint.hpp"
#include "g2cl/error.hpp"
#include "g2cl/optim.hpp"
#include "g2cl/random.hpp"

namespace g2cl::train {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
  if (neighbor_k < 1) throw ConfigError("train: neighbor_k must be >= 1");
  if (sampler_group == 1) throw ConfigError("train: sampler_group must be 0 (whole locations) or >= 2");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  if (!(grad_clip >= 0)) throw ConfigError("train: grad_clip must be >= 0");
  if (!(warmup_epochs >= 0)) throw ConfigError("train: warmup_epochs must be >= 0");
  loss.validate();
  encoder.validate();
  augment.validate();
  if (augment.target_height != encoder.input_height || augment.target_width != encoder.input_width)
    throw ConfigError("train: augment target size must equal the encoder input size");
}

geo::NeighborIndex precompute_geo(const dataset::Manifest& manifest, int k) {
  const auto locs = manifest.locations();
  return geo::build_neighbor_index(locs, k);
}

double learning_rate_at(const TrainConfig& config, double progress) {
  double lr = config.learning_rate;
  if (config.lr_schedule == LrSchedule::cosine)
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * progress / static_cast<double>(config.epochs)));
  if (config.warmup_epochs > 0.0 && progress < config.warmup_epochs)
    lr *= progress / config.warmup_epochs;
  return lr;
}

namespace {

json encoder_echo(const encoder::EncoderConfig& c) {
  return {{"backbone_name", c.backbone_name}, {"embedding_dim", c.embedding_dim},
          {"input_height", c.input_height},   {"input_width", c.input_width},
          {"base_channels", c.base_channels}, {"seed", c.seed}};
}

std::string log_row(std::int64_t step, const loss::LossBreakdown& b, double lr) {
  std::ostringstream out;
  out << std::setprecision(10) << step << ',' << b.l_p << ',' << b.l_gs << ',' << b.l_gu << ','
      << b.l_gc << ',' << b.total << ',' << b.skipped_anchors << ',' << lr << '\n';
  return out.str();
}

}  // namespace

std::unique_ptr<encoder::Encoder> load_encoder(const fs::path& checkpoint) {
  const auto ckpt = load_checkpoint(checkpoint);
  encoder::EncoderConfig c;
  try {
    const auto& e = ckpt.config.at("encoder");
    c.backbone_name = e.at("backbone_name").get<std::string>();
    c.embedding_dim = e.at("embedding_dim").get<int>();
    c.input_height = e.at("input_height").get<int>();
    c.input_width = e.at("input_width").get<int>();
    c.base_channels = e.at("base_channels").get<int>();
    c.seed = e.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw DataError(std::string("checkpoint config lacks encoder settings: ") + ex.what());
  }
  auto enc = encoder::make_encoder(c);
  import_parameters(ckpt, *enc);
  return enc;
}

TrainResult train(const TrainConfig& config, const dataset::Manifest& full_manifest,
                  const TrainOptions& options) {
  config.validate();
  const auto manifest = full_manifest.filter(
      [&](const dataset::ImageRecord& r) { return config.data_filter.accepts(r); });
  const auto pairs = dataset::make_pairs(manifest);
  if (pairs.empty()) throw DataError("train: manifest yields no training pairs");
  const auto index = precompute_geo(manifest, config.neighbor_k);

  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) throw DataError("cannot create " + options.out_dir.string() + ": " + ec.message());

  auto enc = encoder::make_encoder(config.encoder);
  optim::AdamW opt({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  int start_epoch = 0;
  if (options.resume_from) {
    const auto ckpt = load_checkpoint(*options.resume_from);
    import_parameters(ckpt, *enc);
    auto params = enc->parameters();
    opt.import_state(ckpt, params, ckpt.optimizer_step);
    start_epoch = ckpt.epoch;
  }

  // Decode each referenced image once.
  std::map<std::size_t, Image> images;
  for (const auto& p : pairs)
    for (auto idx : {p.sat, p.uav})
      if (!images.count(idx)) {
        const auto& rec = manifest.records()[idx];
        try {
          images.emplace(idx, read_ppm(manifest.resolve(rec)));
        } catch (const DataError& e) {
          throw DataError("record '" + rec.id + "': unreadable image: " + e.what());
        }
      }

  json echo = options.config_echo;
  echo["encoder"] = encoder_echo(config.encoder);

  TrainResult result;
  result.log = options.out_dir / "train_log.csv";
  std::ofstream log(result.log, std::ios::binary);
  if (!log) throw DataError("cannot write training log " + result.log.string());
  log << "step,l_p,l_gs,l_gu,l_gc,total,skipped_anchors,lr\n";

  auto write_ckpt = [&](const fs::path& path, int epochs_done) {
    Checkpoint ckpt;
    ckpt.config = echo;
    ckpt.epoch = epochs_done;
    ckpt.optimizer_step = opt.step_count();
    ckpt.seed = config.seed;
    ckpt.tensors = export_parameters(*enc);
    auto params = enc->parameters();
    for (auto& t : opt.export_state(params)) ckpt.tensors.push_back(std::move(t));
    save_checkpoint(path, ckpt);
  };

  const int last_epoch = std::min(config.epochs, options.stop_after_epoch.value_or(config.epochs));
  const auto& recs = manifest.records();
  for (int epoch = start_epoch; epoch < last_epoch; ++epoch) {
    const auto plan = dataset::sample_batches(pairs, manifest, config.batch_size, config.seed,
                                              static_cast<std::uint64_t>(epoch),
                                              config.sampler_group);
    EpochSummary summary;
    summary.epoch = epoch + 1;
    for (std::size_t bi = 0; bi < plan.batches.size(); ++bi) {
      const auto& batch = plan.batches[bi];
      const auto b = batch.size();
      const double lr = learning_rate_at(
          config, epoch + static_cast<double>(bi + 1) / static_cast<double>(plan.batches.size()));
      opt.set_learning_rate(lr);
      std::vector<Image> views;
      views.reserve(2 * b);
      loss::BatchFeatures feats;
      for (std::size_t j = 0; j < b; ++j) {
        const auto& p = pairs[batch[j]];
        views.push_back(dataset::augment(images.at(p.sat), config.augment,
                                         mix_keys({static_cast<std::uint64_t>(epoch), bi, j, 0})));
        feats.location_ids.push_back(recs[p.sat].location_id);
        feats.geo_points.push_back(p.geo);
      }
      for (std::size_t j = 0; j < b; ++j) {
        const auto& p = pairs[batch[j]];
        views.push_back(dataset::augment(images.at(p.uav), config.augment,
                                         mix_keys({static_cast<std::uint64_t>(epoch), bi, j, 1})));
      }

      enc->zero_grad();
      const MatrixF emb = enc->encode(views, encoder::Mode::train);
      const auto rows = static_cast<Eigen::Index>(b);
      feats.sat = emb.topRows(rows).cast<double>();
      feats.uav = emb.bottomRows(rows).cast<double>();
      auto grads = loss::BatchGradients::zeros_like(feats);
      const std::uint64_t step_seed = mix_keys({config.seed, static_cast<std::uint64_t>(epoch), bi});
      const auto breakdown = loss::total_loss(feats, index, config.loss, &grads, step_seed);
      const std::int64_t step = opt.step_count() + 1;
      if (!std::isfinite(breakdown.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << " (l_p=" << breakdown.l_p
            << " l_gs=" << breakdown.l_gs << " l_gu=" << breakdown.l_gu << " l_gc=" << breakdown.l_gc
            << " lr=" << lr << ")";
        throw NonFiniteLossError(msg.str());
      }

      MatrixF g(2 * rows, emb.cols());
      g.topRows(rows) = grads.sat.cast<float>();
      g.bottomRows(rows) = grads.uav.cast<float>();
      enc->backward(g);
      auto params = enc->parameters();
      if (config.grad_clip > 0) optim::clip_grad_norm(params, config.grad_clip);
      opt.step(params);

      log << log_row(step, breakdown, lr);
      result.steps.push_back(breakdown);
      summary.mean_total += breakdown.total;
      summary.mean_l_p += breakdown.l_p;
      summary.mean_l_g += breakdown.l_g;
      ++summary.steps;
    }
    if (summary.steps > 0) {
      const auto n = static_cast<double>(summary.steps);
      summary.mean_total /= n;
      summary.mean_l_p /= n;
      summary.mean_l_g /= n;
    }
    result.epochs.push_back(summary);
    if (options.on_epoch) options.on_epoch(summary);
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0)
      write_ckpt(options.out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".ckpt"), epoch + 1);
  }
  log.flush();
  if (!log) throw DataError("failed writing training log " + result.log.string());

  result.checkpoint = options.out_dir / "checkpoint.ckpt";
  write_ckpt(result.checkpoint, last_epoch);
  return result;
}

}  // namespace g2cl::train
