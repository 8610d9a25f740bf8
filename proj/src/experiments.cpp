#include "g2cl/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "g2cl/error.hpp"
#include "g2cl/random.hpp"

namespace g2cl::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string csv_cell(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  if (v.is_number_float()) {
    std::ostringstream out;
    out.precision(10);
    out << v.get<double>();
    return out.str();
  }
  return v.dump();
}

json epochs_json(const std::vector<train::EpochSummary>& epochs) {
  json out = json::array();
  for (const auto& e : epochs)
    out.push_back({{"epoch", e.epoch}, {"total", e.mean_total}, {"l_p", e.mean_l_p}, {"l_g", e.mean_l_g},
                   {"steps", e.steps}});
  return out;
}

std::vector<train::EpochSummary> epochs_from(const json& j) {
  std::vector<train::EpochSummary> out;
  for (const auto& e : j)
    out.push_back({e.at("epoch").get<int>(), e.at("total").get<double>(), e.at("l_p").get<double>(),
                   e.at("l_g").get<double>(), e.at("steps").get<std::size_t>()});
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Identity of the training data: record ids, positions and image bytes.
std::string data_fingerprint(const dataset::Manifest& m) {
  std::uint64_t h = 0;
  for (const auto& r : m.records()) {
    std::ostringstream line;
    line.precision(17);
    line << r.id << '|' << r.location_id << '|' << r.geo.lat_deg() << ',' << r.geo.lon_deg() << '|';
    const auto text = line.str() + read_text(m.resolve(r));
    h = mix_keys({h, fnv1a64(text.data(), text.size())});
  }
  return hex(h);
}

void note(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::vector<std::string> metric_columns(const eval::EvalOptions& opts) {
  std::vector<std::string> cols;
  for (int k : opts.ks) cols.push_back("recall@" + std::to_string(k));
  for (int k : opts.ks) cols.push_back("sdm@" + std::to_string(k));
  return cols;
}

std::vector<json> metric_cells(const eval::EvalReport& r, const eval::EvalOptions& opts) {
  std::vector<json> cells;
  for (int k : opts.ks) cells.emplace_back(r.recall.at(k));
  for (int k : opts.ks) cells.emplace_back(r.sdm.at(k));
  return cells;
}

std::vector<json> median_cells(const std::vector<RunRecord>& runs, const eval::EvalOptions& opts) {
  std::vector<json> cells;
  for (int k : opts.ks) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.report.recall.at(k));
    cells.emplace_back(median(v));
  }
  for (int k : opts.ks) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.report.sdm.at(k));
    cells.emplace_back(median(v));
  }
  return cells;
}

json final_loss(const RunRecord& r) { return r.epochs.empty() ? json(nullptr) : json(r.epochs.back().mean_total); }

}  // namespace

std::string Table::to_csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_cell(row[i]);
    out += "\n";
  }
  return out;
}

json Table::to_json() const {
  json out = json::array();
  for (const auto& row : rows) {
    json obj = json::object();
    for (std::size_t i = 0; i < columns.size() && i < row.size(); ++i) obj[columns[i]] = row[i];
    out.push_back(std::move(obj));
  }
  return out;
}

void Table::write(const fs::path& dir, const std::string& stem) const {
  fs::create_directories(dir);
  std::ofstream csv(dir / (stem + ".csv"));
  csv << to_csv();
  std::ofstream js(dir / (stem + ".json"));
  js << to_json().dump(2) << "\n";
  if (!csv || !js) throw Error("cannot write table '" + stem + "' under " + dir.string());
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty list");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RunRecord train_and_evaluate(const config::RunConfig& config, const dataset::Manifest& train_manifest,
                             const dataset::Manifest& queries, const fs::path& cache_dir, const Logger& log) {
  RunRecord rec;
  const auto key = config.model_key() + "data=" + data_fingerprint(train_manifest) + "\n";
  rec.config_hash = fnv1a64(key.data(), key.size());
  rec.run_dir = cache_dir / hex(rec.config_hash);
  const auto ckpt = rec.run_dir / "checkpoint.ckpt";
  const auto done = rec.run_dir / "epochs.json";

  // epochs.json is written last, so its presence marks a finished run.
  if (fs::exists(done) && fs::exists(ckpt) && read_text(rec.run_dir / "model_key.txt") == key) {
    rec.epochs = epochs_from(json::parse(read_text(done)));
    rec.from_cache = true;
    note(log, "reusing model " + hex(rec.config_hash));
  } else {
    fs::create_directories(rec.run_dir);
    config::save(rec.run_dir / "resolved_config.ini", config);
    std::ofstream(rec.run_dir / "model_key.txt") << key;
    train::TrainOptions opts;
    opts.out_dir = rec.run_dir;
    opts.config_echo = {{"resolved_config", config.to_ini()}};
    opts.on_epoch = [&](const train::EpochSummary& e) {
      note(log, "  epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_total));
    };
    auto result = train::train(config.train, train_manifest, opts);
    rec.epochs = std::move(result.epochs);
    std::ofstream(done) << epochs_json(rec.epochs).dump(2) << "\n";
  }

  auto enc = train::load_encoder(ckpt);
  rec.report = eval::evaluate(queries, train_manifest, *enc, config.eval);
  return rec;
}

std::vector<AblationRow> ablation_rows() {
  return {{1, "baseline", false, false, false}, {2, "L_GS", true, false, false},
          {3, "L_GU", false, true, false},      {4, "L_GC", false, false, true},
          {5, "L_GS+L_GU", true, true, false},  {6, "L_GU+L_GC", false, true, true},
          {7, "L_GS+L_GC", true, false, true},  {8, "L_GS+L_GU+L_GC", true, true, true}};
}

AblationResult run_ablate(const config::RunConfig& config, const dataset::Manifest& train_manifest,
                          const dataset::Manifest& queries, const fs::path& work_dir, const Logger& log) {
  AblationResult out;
  const auto metrics = metric_columns(config.eval);
  out.per_seed.columns = {"row", "name", "l_gs", "l_gu", "l_gc", "seed", "final_loss"};
  out.per_seed.columns.insert(out.per_seed.columns.end(), metrics.begin(), metrics.end());
  out.summary.columns = {"row", "name", "l_gs", "l_gu", "l_gc", "seeds"};
  out.summary.columns.insert(out.summary.columns.end(), metrics.begin(), metrics.end());

  for (const auto& row : ablation_rows()) {
    std::vector<RunRecord> runs;
    for (auto seed : config.seeds) {
      auto c = config;
      c.train.seed = seed;
      c.train.loss.objective = loss::Objective::g2cl;
      c.train.loss.enable_gs = row.gs;
      c.train.loss.enable_gu = row.gu;
      c.train.loss.enable_gc = row.gc;
      c.resolve();
      note(log, "ablation row " + std::to_string(row.index) + " (" + row.name + "), seed " + std::to_string(seed));
      auto rec = train_and_evaluate(c, train_manifest, queries, work_dir / "models", log);
      std::vector<json> cells = {row.index, row.name, row.gs, row.gu, row.gc, seed, final_loss(rec)};
      for (auto& m : metric_cells(rec.report, c.eval)) cells.push_back(std::move(m));
      out.per_seed.rows.push_back(std::move(cells));
      runs.push_back(std::move(rec));
    }
    std::vector<json> cells = {row.index, row.name, row.gs, row.gu, row.gc, config.seeds.size()};
    for (auto& m : median_cells(runs, config.eval)) cells.push_back(std::move(m));
    out.summary.rows.push_back(std::move(cells));
    out.runs.push_back(std::move(runs));
  }
  return out;
}

SweepResult run_sweep_alpha(const config::RunConfig& config, const dataset::Manifest& train_manifest,
                            const dataset::Manifest& queries, const fs::path& work_dir, const Logger& log) {
  SweepResult out;
  out.table.columns = {"alpha", "seed", "final_loss"};
  const auto metrics = metric_columns(config.eval);
  out.table.columns.insert(out.table.columns.end(), metrics.begin(), metrics.end());
  double lo = 1.0, hi = 0.0;
  for (double alpha : config.alphas) {
    auto c = config;
    c.train.seed = config.seeds.front();
    c.train.loss.alpha = alpha;
    c.resolve();
    note(log, "alpha " + c.get("loss.alpha"));
    auto rec = train_and_evaluate(c, train_manifest, queries, work_dir / "models", log);
    std::vector<json> cells = {alpha, c.train.seed, final_loss(rec)};
    for (auto& m : metric_cells(rec.report, c.eval)) cells.push_back(std::move(m));
    out.table.rows.push_back(std::move(cells));
    const double r1 = rec.report.recall.begin()->second;
    lo = std::min(lo, r1);
    hi = std::max(hi, r1);
    out.runs.push_back(std::move(rec));
  }
  out.recall1_spread = hi - lo;
  return out;
}

std::vector<BaselineRow> baseline_rows() {
  return {{"L_p", loss::Objective::g2cl, false},
          {"L_p+triplet", loss::Objective::triplet, true},
          {"L_p+hard_triplet", loss::Objective::hard_triplet, true},
          {"G2CL", loss::Objective::g2cl, true}};
}

BaselineResult run_baselines(const config::RunConfig& config, const dataset::Manifest& train_manifest,
                             const dataset::Manifest& queries, const fs::path& work_dir, const Logger& log) {
  BaselineResult out;
  const auto metrics = metric_columns(config.eval);
  out.per_seed.columns = {"method", "seed", "final_loss"};
  out.per_seed.columns.insert(out.per_seed.columns.end(), metrics.begin(), metrics.end());
  out.summary.columns = {"method", "seeds"};
  out.summary.columns.insert(out.summary.columns.end(), metrics.begin(), metrics.end());
  for (const auto& row : baseline_rows()) {
    std::vector<RunRecord> runs;
    for (auto seed : config.seeds) {
      auto c = config;
      c.train.seed = seed;
      c.train.loss.objective = row.objective;
      c.train.loss.enable_gs = c.train.loss.enable_gu = c.train.loss.enable_gc = row.view_terms;
      c.resolve();
      note(log, "method " + row.name + ", seed " + std::to_string(seed));
      auto rec = train_and_evaluate(c, train_manifest, queries, work_dir / "models", log);
      std::vector<json> cells = {row.name, seed, final_loss(rec)};
      for (auto& m : metric_cells(rec.report, c.eval)) cells.push_back(std::move(m));
      out.per_seed.rows.push_back(std::move(cells));
      runs.push_back(std::move(rec));
    }
    std::vector<json> cells = {row.name, config.seeds.size()};
    for (auto& m : median_cells(runs, config.eval)) cells.push_back(std::move(m));
    out.summary.rows.push_back(std::move(cells));
    out.runs.push_back(std::move(runs));
  }
  return out;
}

}  // namespace g2cl::experiments
