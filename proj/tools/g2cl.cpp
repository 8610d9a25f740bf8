// Command-line front end: generate, train, embed, evaluate, ablate,
// sweep-alpha and neighbor-index.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "g2cl/config.hpp"
#include "g2cl/dataset.hpp"
#include "g2cl/error.hpp"
#include "g2cl/eval.hpp"
#include "g2cl/experiments.hpp"
#include "g2cl/geo.hpp"
#include "g2cl/synth.hpp"
#include "g2cl/train.hpp"
#include "g2cl/version.hpp"

namespace fs = std::filesystem;
using namespace g2cl;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, data_error = 3, non_finite = 4 };

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string scale, time, k;
  std::optional<double> sigma;
};

struct Inputs {
  std::string manifest, query, gallery, checkpoint, resume;
  std::optional<int> neighbors;
  bool baselines = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "INI config file")->check(CLI::ExistingFile);
  sub->add_option("--set", c.sets, "override, section.key=value (repeatable)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "seed for training and generation");
  sub->add_flag("--deterministic", c.deterministic, "single-threaded, bit-reproducible run");
  sub->add_option("--scale", c.scale, "satellite scale filter")->check(CLI::IsMember({"small", "middle", "big", "all"}));
  sub->add_option("--time", c.time, "satellite capture-time filter, e.g. 2020 or all");
  sub->add_option("--k", c.k, "retrieval cutoffs, e.g. 1,3,5,10");
  sub->add_option("--sigma", c.sigma, "SDM distance scale in meters");
}

config::RunConfig resolve(const Common& c) {
  config::RunConfig cfg = c.config_path.empty() ? config::RunConfig{} : config::load(c.config_path);
  for (const auto& s : c.sets) cfg.set(s);
  if (c.seed) {
    cfg.set("train.seed", std::to_string(*c.seed));
    cfg.set("synth.seed", std::to_string(*c.seed));
  }
  if (!c.scale.empty()) cfg.set("data.scale", c.scale);
  if (!c.time.empty()) cfg.set("data.time", c.time);
  if (!c.k.empty()) cfg.set("eval.k", c.k);
  if (c.sigma) cfg.set("eval.sigma_m", std::to_string(*c.sigma));
  cfg.resolve();
  return cfg;
}

void write_provenance(const fs::path& out, const config::RunConfig& cfg) {
  fs::create_directories(out);
  config::save(out / "resolved_config.ini", cfg);
  std::ofstream v(out / "VERSION");
  v << "g2cl " << version() << " (" << git_describe() << ")\n";
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required flag ") + flag);
  return value;
}

void print_report(const eval::EvalReport& r) {
  for (int k : r.ks)
    std::cout << "Recall@" << k << " " << r.recall.at(k) << "  SDM@" << k << " " << r.sdm.at(k) << "\n";
}

int run_generate(const Common& c) {
  const auto cfg = resolve(c);
  write_provenance(c.out, cfg);
  const auto out = synth::generate(cfg.synth, c.out);
  std::cout << "locations " << out.locations << ", satellite " << out.satellite_images << ", uav "
            << out.uav_images << ", queries " << out.query_images << "\n"
            << "manifest " << out.manifest_path.string() << "\nqueries " << out.queries_path.string() << "\n";
  return ok;
}

int run_train(const Common& c, const Inputs& in) {
  const auto cfg = resolve(c);
  write_provenance(c.out, cfg);
  const auto manifest = dataset::load_manifest(require(in.manifest, "--manifest"));
  train::TrainOptions opts;
  opts.out_dir = c.out;
  opts.config_echo = {{"resolved_config", cfg.to_ini()}};
  if (!in.resume.empty()) opts.resume_from = in.resume;
  opts.on_epoch = [](const train::EpochSummary& e) {
    log_line("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_total) + " (l_p " +
             std::to_string(e.mean_l_p) + ", l_g " + std::to_string(e.mean_l_g) + ")");
  };
  const auto result = train::train(cfg.train, manifest, opts);
  std::cout << "checkpoint " << result.checkpoint.string() << "\nlog " << result.log.string() << "\n";
  return ok;
}

int run_embed(const Common& c, const Inputs& in) {
  const auto cfg = resolve(c);
  write_provenance(c.out, cfg);
  const auto manifest = dataset::load_manifest(require(in.manifest, "--manifest"));
  const auto filtered = manifest.filter([&](const dataset::ImageRecord& r) { return cfg.eval.gallery_filter.accepts(r); });
  if (filtered.records().empty()) throw DataError("embed: no records left after filtering");
  auto enc = train::load_encoder(require(in.checkpoint, "--checkpoint"));
  const auto store = eval::extract_features(filtered, *enc, cfg.eval.batch_size);
  eval::save_feature_store(store, fs::path(c.out) / "features.f32", fs::path(c.out) / "features.json");
  std::cout << "features " << store.size() << " x " << store.dims() << "\n";
  return ok;
}

int run_evaluate(const Common& c, const Inputs& in) {
  const auto cfg = resolve(c);
  write_provenance(c.out, cfg);
  const auto queries = dataset::load_manifest(require(in.query, "--query"));
  const auto gallery = dataset::load_manifest(in.gallery.empty() ? require(in.manifest, "--gallery") : in.gallery);
  auto enc = train::load_encoder(require(in.checkpoint, "--checkpoint"));
  const auto report = eval::evaluate(queries, gallery, *enc, cfg.eval);
  std::ofstream(fs::path(c.out) / "report.json") << report.to_json().dump(2) << "\n";
  std::ofstream(fs::path(c.out) / "report.csv") << report.to_csv();
  print_report(report);
  return ok;
}

int run_ablate(const Common& c, const Inputs& in) {
  const auto cfg = resolve(c);
  write_provenance(c.out, cfg);
  const auto manifest = dataset::load_manifest(require(in.manifest, "--manifest"));
  const auto queries = dataset::load_manifest(require(in.query, "--query"));
  const auto result = experiments::run_ablate(cfg, manifest, queries, c.out, log_line);
  result.summary.write(c.out, "ablation");
  result.per_seed.write(c.out, "ablation_per_seed");
  std::cout << result.summary.to_csv();
  if (in.baselines) {
    const auto base = experiments::run_baselines(cfg, manifest, queries, c.out, log_line);
    base.summary.write(c.out, "baselines");
    base.per_seed.write(c.out, "baselines_per_seed");
    std::cout << base.summary.to_csv();
  }
  return ok;
}

int run_sweep(const Common& c, const Inputs& in) {
  const auto cfg = resolve(c);
  write_provenance(c.out, cfg);
  const auto manifest = dataset::load_manifest(require(in.manifest, "--manifest"));
  const auto queries = dataset::load_manifest(require(in.query, "--query"));
  const auto result = experiments::run_sweep_alpha(cfg, manifest, queries, c.out, log_line);
  result.table.write(c.out, "sweep_alpha");
  std::cout << result.table.to_csv() << "recall@1 spread " << result.recall1_spread << "\n";
  return ok;
}

int run_neighbor_index(const Common& c, const Inputs& in) {
  auto cfg = resolve(c);
  if (in.neighbors) {
    cfg.set("train.neighbor_k", std::to_string(*in.neighbors));
    cfg.resolve();
  }
  write_provenance(c.out, cfg);
  const auto manifest = dataset::load_manifest(require(in.manifest, "--manifest"), false);
  const auto index = train::precompute_geo(manifest, cfg.train.neighbor_k);
  std::ofstream(fs::path(c.out) / "neighbor_index.json") << index.to_json().dump() << "\n";
  std::cout << "neighbor index: " << index.entries().size() << " locations, k " << index.k() << "\n";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"G2CL: geography-aware contrastive training and retrieval evaluation"};
  app.set_version_flag("--version", "g2cl " + version() + " (" + git_describe() + ")");
  app.require_subcommand(1);

  Common common;
  Inputs in;
  auto* gen = app.add_subcommand("generate", "render the synthetic benchmark");
  auto* trn = app.add_subcommand("train", "train the shared encoder");
  auto* emb = app.add_subcommand("embed", "extract features for a manifest");
  auto* evl = app.add_subcommand("evaluate", "Recall@K and SDM@K of UAV queries against a satellite gallery");
  auto* abl = app.add_subcommand("ablate", "loss-component ablation table");
  auto* swp = app.add_subcommand("sweep-alpha", "adaptive-weight alpha sweep");
  auto* nbr = app.add_subcommand("neighbor-index", "build and dump the geographic neighbour index");
  for (auto* sub : {gen, trn, emb, evl, abl, swp, nbr}) add_common(sub, common);

  for (auto* sub : {trn, emb, evl, abl, swp, nbr}) sub->add_option("--manifest", in.manifest, "training or gallery manifest");
  for (auto* sub : {emb, evl}) sub->add_option("--checkpoint", in.checkpoint, "trained checkpoint");
  for (auto* sub : {evl, abl, swp}) sub->add_option("--query", in.query, "query (held-out UAV) manifest");
  evl->add_option("--gallery", in.gallery, "gallery manifest (default: --manifest)");
  trn->add_option("--resume", in.resume, "checkpoint to resume from");
  abl->add_flag("--baselines", in.baselines, "also compare against triplet baselines");
  nbr->add_option("--neighbors", in.neighbors, "neighbours per location (default: train.neighbor_k)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (common.deterministic) omp_set_num_threads(1);
    if (gen->parsed()) return run_generate(common);
    if (trn->parsed()) return run_train(common, in);
    if (emb->parsed()) return run_embed(common, in);
    if (evl->parsed()) return run_evaluate(common, in);
    if (abl->parsed()) return run_ablate(common, in);
    if (swp->parsed()) return run_sweep(common, in);
    if (nbr->parsed()) return run_neighbor_index(common, in);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return data_error;
  } catch (const NonFiniteLossError& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return non_finite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure;
  }
  return failure;
}
