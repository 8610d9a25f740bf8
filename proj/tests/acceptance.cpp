// Acceptance gate: one PASS/FAIL line per criterion, with its runtime.
//
//   acceptance [--only 1,4,5] [--work DIR]
//
// Criteria 1-4 are exact oracle suites. 5-8 train the toy encoder on the
// synthetic benchmark; models are cached under the work directory so runs
// shared between criteria train once. The directory is wiped at start.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "eval_fixtures.hpp"
#include "g2cl/config.hpp"
#include "g2cl/eval.hpp"
#include "g2cl/experiments.hpp"
#include "g2cl/geo.hpp"
#include "g2cl/loss.hpp"
#include "g2cl/synth.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace g2cl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Failure tally for one criterion; the first few messages are kept.
struct Tally {
  std::size_t checks = 0, failures = 0;
  std::vector<std::string> notes;
  void expect(bool ok, const std::string& what) {
    ++checks;
    if (ok) return;
    ++failures;
    if (notes.size() < 5) notes.push_back(what);
  }
  bool ok() const { return failures == 0; }
};

struct Outcome {
  bool pass = false;
  std::string detail;
  json data = json::object();
};

struct Criterion {
  int id;
  std::string title;
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

Outcome from_tally(const Tally& t, const std::string& what) {
  Outcome o;
  o.pass = t.ok();
  o.detail = std::to_string(t.checks - t.failures) + "/" + std::to_string(t.checks) + " " + what;
  for (const auto& n : t.notes) o.detail += "; " + n;
  o.data = {{"checks", t.checks}, {"failures", t.failures}};
  return o;
}

// ---------------------------------------------------------------- 1

Outcome geo_suite() {
  Tally t;
  const double r = geo::kEarthRadiusM;
  const double degree = geo::haversine({0, 0}, {0, 1});
  const double antipodal = geo::haversine({90, 0}, {-90, 0});
  t.expect(std::abs(degree - r * std::numbers::pi / 180) <= 1e-6 * degree, "equatorial degree");
  t.expect(std::abs(antipodal - r * std::numbers::pi) <= 1e-6 * antipodal, "antipodal");
  t.expect(std::abs(geo::haversine({0, 180}, {0, 0}) - r * std::numbers::pi) <= 1e-6 * antipodal, "antimeridian");

  Rng rng(101);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 2 + static_cast<int>(rng.below(499));  // N <= 500
    auto locs = testutil::lattice_locations(rng, n - 1);
    locs.push_back({"X0", geo::GeoPoint(29.9, 120.0)});
    const int k = 1 + static_cast<int>(rng.below(16));
    const auto idx = geo::build_neighbor_index(locs, k);
    t.expect(idx == geo::build_neighbor_index_serial(locs, k), "parallel/serial instance " + std::to_string(inst));
    for (const auto& [id, want] : oracle::neighbors(locs, k)) {
      const auto& got = idx.neighbors(id);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < want.size(); ++i)
        same = got[i].id == want[i].id && got[i].distance_m == want[i].d;
      t.expect(same, "instance " + std::to_string(inst) + " location " + id);
    }
  }
  return from_tally(t, "geo checks");
}

// ---------------------------------------------------------------- 2

loss::BatchFeatures rows_batch(const MatrixD& e, const std::vector<std::string>& ids,
                               const std::vector<geo::Location>& where) {
  loss::BatchFeatures b;
  b.sat = e;
  b.uav = e;
  b.location_ids = ids;
  for (const auto& id : ids)
    for (const auto& l : where)
      if (l.id == id) b.geo_points.push_back(l.point);
  return b;
}

Outcome loss_suite() {
  Tally t;
  const auto row = testutil::grid(1, 5);
  MatrixD one(1, 3);
  one << 0.6, 0.8, 0;
  t.expect(loss::info_nce(rows_batch(one, {"G0_0"}, row), 0.1) == 0.0, "info_nce B=1");

  const MatrixD eye = MatrixD::Identity(2, 2);
  const auto two = rows_batch(eye, {"G0_0", "G0_1"}, row);
  t.expect(std::abs(loss::info_nce(two, 1.0) - std::log1p(std::exp(-1.0))) <= 1e-9, "info_nce B=2");

  const auto idx = geo::build_neighbor_index(row, 3);
  MatrixD eq(4, 1);
  eq << 0.0, 1.0, -1.0, 2.0;
  const auto zero = rows_batch(eq, {"G0_0", "G0_0", "G0_2", "G0_4"}, row);
  for (auto v : {loss::View::satellite, loss::View::uav, loss::View::concat})
    t.expect(std::abs(loss::geo_part_loss(v, zero, idx, loss::LossConfig{}).loss - std::log(2.0)) <= 1e-9,
             "zero-margin part");

  using loss::WeightMode;
  const double alpha = 3.0;
  t.expect(loss::adaptive_weight("G0_0", "G0_4", idx, alpha, WeightMode::as_written) == alpha, "outside the neighbour set");
  t.expect(loss::adaptive_weight("G0_0", "G0_1", idx, alpha, WeightMode::as_written) == alpha, "nearest neighbour");
  const double h = geo::neighbor_norm("G0_0", "G0_3", idx);
  t.expect(loss::adaptive_weight("G0_0", "G0_3", idx, alpha, WeightMode::as_written) == alpha / h, "farther neighbour");
  t.expect(loss::adaptive_weight("G0_0", "G0_3", idx, alpha, WeightMode::inverted) == alpha * h, "inverted mode");
  t.expect(std::abs(h - 3.0) < 1e-3, "h about 3 cells");
  return from_tally(t, "analytic cases");
}

// ---------------------------------------------------------------- 3

Outcome gradient_suite() {
  Tally t;
  Rng rng(303);
  const auto locs = testutil::grid(3, 4);
  const auto idx = geo::build_neighbor_index(locs, 5);
  auto batch = [&] {
    for (;;) {
      auto b = testutil::random_batch(rng, locs, 2 + static_cast<int>(rng.below(11)), 3 + static_cast<int>(rng.below(6)));
      b.sat *= 1.25;
      if (testutil::away_from_ties(b, 1e-3, 0.3)) return b;
    }
  };
  double worst = 0;
  auto check = [&](const std::string& term, const loss::BatchFeatures& b, const testutil::LossFn& f) {
    const double err = testutil::gradient_rel_error(b, f, 1e-4);
    worst = std::max(worst, err);
    t.expect(err < 1e-3, term + " rel error " + fmt(err, 6));
  };
  loss::LossConfig inverted;
  inverted.weight_mode = loss::WeightMode::inverted;
  for (int i = 0; i < 50; ++i) {
    const auto b = batch();
    const double tau = rng.uniform(0.1, 1.0);
    check("L_p", b, [&](const auto& x, auto* g) { return loss::info_nce(x, tau, false, g); });
    check("L_p symmetric", b, [&](const auto& x, auto* g) { return loss::info_nce(x, tau, true, g); });
    const std::pair<loss::View, const char*> views[] = {
        {loss::View::satellite, "L_GS"}, {loss::View::uav, "L_GU"}, {loss::View::concat, "L_GC"}};
    for (const auto& [v, name] : views) {
      check(name, b, [&](const auto& x, auto* g) { return loss::geo_part_loss(v, x, idx, loss::LossConfig{}, g).loss; });
      check(std::string(name) + " inverted", b,
            [&](const auto& x, auto* g) { return loss::geo_part_loss(v, x, idx, inverted, g).loss; });
    }
    check("triplet", b, [&](const auto& x, auto* g) { return loss::baseline_triplet(x, 0.3, false, 9, g); });
    check("hard triplet", b, [&](const auto& x, auto* g) { return loss::baseline_triplet(x, 0.3, true, 9, g); });
    check("total", b, [&](const auto& x, auto* g) { return loss::total_loss(x, idx, loss::LossConfig{}, g).total; });
  }
  auto o = from_tally(t, "gradient checks");
  o.detail += ", worst rel error " + fmt(worst, 8);
  o.data["worst_rel_error"] = worst;
  return o;
}

// ---------------------------------------------------------------- 4

eval::RankingResult list_at(const std::vector<double>& d) {
  eval::RankingResult r;
  r.query_id = "q";
  r.query_location = "L";
  for (std::size_t i = 0; i < d.size(); ++i) r.ranked.push_back({"g" + std::to_string(i), "M", 0.0, d[i]});
  return r;
}

Outcome mining_metric_suite() {
  Tally t;
  Rng rng(404);
  for (int inst = 0; inst < 200; ++inst) {
    const int n = 1 + static_cast<int>(rng.below(64));
    MatrixD e = testutil::unit_rows(rng, n, 4);
    e = (e.array() * 2).round() / 2;  // exact ties
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("L" + std::to_string(rng.below(6)));
    const auto rows = oracle::rows_of(e);
    bool same = true;
    for (int a = 0; a < n; ++a) {
      const auto got = loss::mine_hard(a, e, ids);
      const auto want = oracle::mine(a, rows, ids);
      same = same && got.plus_index == want.plus_index && got.minus_index == want.minus_index &&
             got.p_plus.has_value() == want.plus.has_value() && got.p_minus.has_value() == want.minus.has_value();
      if (got.p_plus && want.plus) same = same && std::abs(*got.p_plus - *want.plus) <= 1e-9;
      if (got.p_minus && want.minus) same = same && std::abs(*got.p_minus - *want.minus) <= 1e-9;
    }
    t.expect(same, "mine_hard instance " + std::to_string(inst));
  }

  for (int inst = 0; inst < 200; ++inst) {
    const auto x = testutil::random_instance(rng, 1 + static_cast<int>(rng.below(8)), 10 + static_cast<int>(rng.below(191)),
                                             1 + static_cast<int>(rng.below(6)));
    const auto got = eval::rank_all(x.queries, x.gallery);
    const auto want = testutil::oracle_rank(x.queries, x.gallery);
    bool same = got.size() == want.size();
    std::vector<std::string> truth;
    for (std::size_t q = 0; same && q < got.size(); ++q) {
      truth.push_back(x.queries.meta[q].location_id);
      same = got[q].ranked.size() == want[q].size();
      for (std::size_t i = 0; same && i < want[q].size(); ++i)
        same = got[q].ranked[i].gallery_id == want[q][i].id &&
               std::abs(got[q].ranked[i].feature_distance - want[q][i].d) <= 1e-9;
    }
    t.expect(same, "rank instance " + std::to_string(inst));
    if (!same) continue;
    const auto tm = eval::truth_from(got);
    for (int k : {1, 3, 5, 10}) {
      const double sigma = 5.0 + 30.0 * rng.uniform(0.0, 1.0);
      t.expect(std::abs(eval::recall_at_k(got, tm, k) - oracle::recall(want, truth, k)) <= 1e-9,
               "recall instance " + std::to_string(inst));
      t.expect(std::abs(eval::sdm_at_k(got, k, sigma) - oracle::sdm(want, k, sigma)) <= 1e-9,
               "sdm instance " + std::to_string(inst));
    }
    t.expect(eval::sdm_at_k(got, 1, 20.0) >= eval::recall_at_k(got, tm, 1), "SDM@1 >= R@1 instance " + std::to_string(inst));
  }

  for (int k = 1; k <= 5; ++k)
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> d(static_cast<std::size_t>(k));
      for (auto& v : d) v = rng.below(3) == 0 ? 20.0 * static_cast<double>(rng.below(4)) : 100.0 * rng.uniform(0.0, 1.0);
      std::vector<int> perm(static_cast<std::size_t>(k));
      std::iota(perm.begin(), perm.end(), 0);
      double best = -1;
      do {
        std::vector<double> p;
        for (int i : perm) p.push_back(d[static_cast<std::size_t>(i)]);
        best = std::max(best, eval::sdm_at_k({list_at(p)}, k, 20.0));
      } while (std::next_permutation(perm.begin(), perm.end()));
      std::sort(d.begin(), d.end());
      t.expect(eval::sdm_at_k({list_at(d)}, k, 20.0) >= best - 1e-15, "permutation maximality K=" + std::to_string(k));
    }
  return from_tally(t, "mining/metric checks");
}

// ---------------------------------------------------------------- 5-8

struct Bench {
  fs::path work;
  config::RunConfig base;     // full benchmark, every satellite scale and time
  config::RunConfig subset;   // big-scale 2022 satellites only
  dataset::Manifest manifest, queries;
  std::function<void(const std::string&)> log = [](const std::string& s) { std::cerr << s << std::endl; };

  fs::path models() const { return work / "models"; }
};

Bench& bench(const fs::path& work) {
  static Bench b = [&] {
    Bench x;
    x.work = work;
    x.base = config::RunConfig::synthetic();
    x.subset = x.base;
    x.subset.set("data.scale", "big");
    x.subset.set("data.time", "2022");
    x.subset.resolve();
    const auto out = synth::generate(x.base.synth, work / "data");
    x.manifest = dataset::load_manifest(out.manifest_path);
    x.queries = dataset::load_manifest(out.queries_path);
    return x;
  }();
  return b;
}

double recall1(const experiments::RunRecord& r) { return r.report.recall.at(1); }
double sdm1(const experiments::RunRecord& r) { return r.report.sdm.at(1); }

Outcome end_to_end(const fs::path& work) {
  auto& b = bench(work);
  const auto rec = experiments::train_and_evaluate(b.base, b.manifest, b.queries, b.models(), b.log);
  const double first = rec.epochs.front().mean_total, last = rec.epochs.back().mean_total;
  const double ratio = last / first;
  Outcome o;
  o.pass = rec.epochs.size() == 30 && ratio < 0.25 && recall1(rec) >= 0.90;
  o.detail = "epoch-1 loss " + fmt(first) + ", final " + fmt(last) + ", ratio " + fmt(ratio) + " (< 0.25); Recall@1 " +
             fmt(recall1(rec)) + " (>= 0.90), SDM@1 " + fmt(sdm1(rec)) + ", gallery " +
             std::to_string(rec.report.gallery_size) + ", queries " + std::to_string(rec.report.num_queries);
  o.data = {{"epoch1_loss", first}, {"final_loss", last}, {"ratio", ratio}, {"recall1", recall1(rec)},
            {"sdm1", sdm1(rec)}, {"report", rec.report.to_json()}};
  return o;
}

Outcome ablation(const fs::path& work) {
  auto& b = bench(work);
  const auto res = experiments::run_ablate(b.subset, b.manifest, b.queries, work, b.log);
  res.summary.write(work, "ablation");
  res.per_seed.write(work, "ablation_per_seed");
  std::vector<double> br, bs, ar, as;
  for (const auto& r : res.runs.front()) {
    br.push_back(recall1(r));
    bs.push_back(sdm1(r));
  }
  for (const auto& r : res.runs.back()) {
    ar.push_back(recall1(r));
    as.push_back(sdm1(r));
  }
  const double mbr = experiments::median(br), mbs = experiments::median(bs);
  const double mar = experiments::median(ar), mas = experiments::median(as);
  Outcome o;
  o.pass = mas >= mbs && mar >= mbr;
  o.detail = std::to_string(b.subset.seeds.size()) + " seeds, median SDM@1 " + fmt(mbs) + " -> " + fmt(mas) +
             ", median Recall@1 " + fmt(mbr) + " -> " + fmt(mar) + " (L_p only -> L_GS+L_GU+L_GC)";
  o.data = {{"baseline", {{"recall1", br}, {"sdm1", bs}}}, {"all_parts", {{"recall1", ar}, {"sdm1", as}}},
            {"table", res.summary.to_json()}};
  return o;
}

Outcome alpha_sweep(const fs::path& work) {
  auto& b = bench(work);
  const auto res = experiments::run_sweep_alpha(b.subset, b.manifest, b.queries, work, b.log);
  res.table.write(work, "sweep_alpha");
  std::string per;
  json values = json::array();
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    per += (i ? ", " : "") + fmt(b.subset.alphas[i], 0) + ":" + fmt(recall1(res.runs[i]), 3);
    values.push_back(recall1(res.runs[i]));
  }
  Outcome o;
  o.pass = res.recall1_spread <= 0.05;
  o.detail = "Recall@1 by alpha {" + per + "}, spread " + fmt(res.recall1_spread) + " (<= 0.05)";
  o.data = {{"recall1", values}, {"spread", res.recall1_spread}};
  return o;
}

Outcome baselines(const fs::path& work) {
  auto& b = bench(work);
  const auto res = experiments::run_baselines(b.subset, b.manifest, b.queries, work, b.log);
  res.summary.write(work, "baselines");
  res.per_seed.write(work, "baselines_per_seed");
  const auto rows = experiments::baseline_rows();
  std::vector<double> med;
  std::string per;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> v;
    for (const auto& r : res.runs[i]) v.push_back(recall1(r));
    med.push_back(experiments::median(v));
    per += (i ? ", " : "") + rows[i].name + " " + fmt(med.back());
  }
  // Rows: L_p, L_p+triplet, L_p+hard_triplet, G2CL.
  Outcome o;
  o.pass = med[3] >= med[1];
  o.detail = "median Recall@1: " + per + "; G2CL " + fmt(med[3]) + " vs triplet " + fmt(med[1]);
  o.data = {{"median_recall1", med}, {"table", res.summary.to_json()}};
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate"};
  std::vector<int> only;
  std::string work = "acceptance_work";
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--work", work, "scratch directory for data, models and tables");
  CLI11_PARSE(app, argc, argv);

  // A fresh directory each time so every timed criterion trains from scratch.
  const fs::path dir = fs::absolute(work);
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<Criterion> all = {
      {1, "geo oracle suite", 30, geo_suite},
      {2, "loss analytic suite", 5, loss_suite},
      {3, "gradient suite", 120, gradient_suite},
      {4, "mining/metric oracle suite", 120, mining_metric_suite},
      {5, "end-to-end synthetic run", 600, [&] { return end_to_end(dir); }},
      {6, "ablation direction", 3600, [&] { return ablation(dir); }},
      {7, "alpha robustness", 5400, [&] { return alpha_sweep(dir); }},
      {8, "G2CL vs plain triplet", 3600, [&] { return baselines(dir); }},
  };

  json summary = json::array();
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.title << ": " << o.detail << "  ("
              << fmt(secs, 1) << " s, limit " << fmt(c.limit_s, 0) << " s" << (in_time ? "" : ", over time") << ")"
              << std::endl;
    summary.push_back({{"criterion", c.id}, {"title", c.title}, {"pass", pass}, {"seconds", secs},
                       {"detail", o.detail}, {"data", o.data}});
  }
  std::ofstream(dir / "acceptance.json") << summary.dump(2) << "\n";
  std::cout << (failed ? "FAILED " + std::to_string(failed) + " criteria" : "ALL CRITERIA PASSED") << std::endl;
  return failed ? 1 : 0;
}
