#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "g2cl/eval.hpp"
#include "g2cl/synth.hpp"
#include "g2cl/train.hpp"

namespace g2cl::config {

// Everything a command can be configured with. Keys are "section.name";
// the INI file uses [section] headers with name = value lines.
struct RunConfig {
  train::TrainConfig train;
  synth::SynthConfig synth;
  eval::EvalOptions eval;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<double> alphas = {1, 2, 3, 4, 5};

  // Defaults tuned for the synthetic benchmark (small images, batch 32).
  static RunConfig synthetic();

  // Applies one "section.name=value" override. Throws ConfigError on an
  // unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  void set(const std::string& assignment);
  std::string get(const std::string& key) const;

  // Keeps derived fields consistent (augment size follows the encoder input,
  // the evaluation gallery filter follows the data filter) and validates.
  void resolve();

  // Canonical INI text of every key, in a fixed order.
  std::string to_ini() const;
  // The keys that influence a trained model, one "key=value" per line.
  std::string model_key() const;
  std::uint64_t train_hash() const;
};

std::vector<std::string> known_keys();

RunConfig load(const std::filesystem::path& path, const RunConfig& base = RunConfig{});
void save(const std::filesystem::path& path, const RunConfig& config);

}  // namespace g2cl::config
