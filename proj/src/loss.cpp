#include "g2cl/loss.hpp"

#include <algorithm>
#include <cmath>

#include "g2cl/error.hpp"
#include "g2cl/random.hpp"

namespace g2cl::loss {

std::string to_string(WeightMode m) { return m == WeightMode::as_written ? "as_written" : "inverted"; }

std::string to_string(Objective o) {
  switch (o) {
    case Objective::g2cl: return "g2cl";
    case Objective::triplet: return "triplet";
    case Objective::hard_triplet: return "hard_triplet";
  }
  return "?";
}

WeightMode parse_weight_mode(const std::string& s) {
  if (s == "as_written") return WeightMode::as_written;
  if (s == "inverted") return WeightMode::inverted;
  throw ConfigError("unknown weight_mode '" + s + "' (as_written|inverted)");
}

Objective parse_objective(const std::string& s) {
  if (s == "g2cl") return Objective::g2cl;
  if (s == "triplet") return Objective::triplet;
  if (s == "hard_triplet") return Objective::hard_triplet;
  throw ConfigError("unknown objective '" + s + "' (g2cl|triplet|hard_triplet)");
}

void LossConfig::validate() const {
  if (!(temperature > 0)) throw ConfigError("loss: temperature must be > 0");
  if (!(alpha > 0)) throw ConfigError("loss: alpha must be > 0");
  if (!(triplet_margin >= 0)) throw ConfigError("loss: triplet_margin must be >= 0");
}

BatchGradients BatchGradients::zeros_like(const BatchFeatures& b) {
  return {MatrixD::Zero(b.sat.rows(), b.sat.cols()), MatrixD::Zero(b.uav.rows(), b.uav.cols())};
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double row_distance(const MatrixD& m, Eigen::Index i, Eigen::Index j) {
  return (m.row(i) - m.row(j)).norm();
}

// Embedding rows the view mines over.
MatrixD view_rows(View view, const BatchFeatures& b) {
  switch (view) {
    case View::satellite: return b.sat;
    case View::uav: return b.uav;
    case View::concat: {
      MatrixD c(b.sat.rows(), b.sat.cols() + b.uav.cols());
      c << b.sat, b.uav;
      return c;
    }
  }
  return {};
}

// Routes a gradient on view rows back to the sat/uav matrices.
void scatter_grad(View view, const MatrixD& g, BatchGradients& out) {
  switch (view) {
    case View::satellite: out.sat += g; break;
    case View::uav: out.uav += g; break;
    case View::concat:
      out.sat += g.leftCols(out.sat.cols());
      out.uav += g.rightCols(out.uav.cols());
      break;
  }
}

// d|x_a - x_b| added to rows a (+coef) and b (-coef).
void add_distance_grad(const MatrixD& rows, Eigen::Index a, Eigen::Index b, double coef,
                       MatrixD& g) {
  const double d = row_distance(rows, a, b);
  if (d <= 0.0) return;
  const Eigen::RowVectorXd u = (rows.row(a) - rows.row(b)) / d;
  g.row(a) += coef * u;
  g.row(b) -= coef * u;
}

void check_batch(const BatchFeatures& b) {
  if (b.sat.rows() != b.uav.rows() || static_cast<std::size_t>(b.sat.rows()) != b.location_ids.size())
    throw ContractError("batch: sat/uav rows and location ids disagree in length");
  if (b.sat.cols() != b.uav.cols()) throw ContractError("batch: sat/uav embedding dims differ");
}

// One direction of InfoNCE: anchors a against gallery g (paired on the
// diagonal). Returns the mean loss and, if requested, adds scale * gradient.
double info_nce_direction(const MatrixD& a, const MatrixD& g, double tau, double scale,
                          MatrixD* grad_a, MatrixD* grad_g) {
  const Eigen::Index n = a.rows();
  const MatrixD logits = (a * g.transpose()) / tau;
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    const double sum = e.sum();
    total += -(logits(i, i) - mx) + std::log(sum);
    if (grad_a) {
      Eigen::RowVectorXd w = e / sum;  // softmax
      w(i) -= 1.0;
      w *= scale / (static_cast<double>(n) * tau);
      grad_a->row(i) += w * g;
      grad_g->noalias() += w.transpose() * a.row(i);
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

double feature_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ContractError("feature_distance: dimension mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

double info_nce(const BatchFeatures& batch, double temperature, bool symmetric,
                BatchGradients* grads) {
  if (!(temperature > 0)) throw ConfigError("info_nce: temperature must be > 0");
  check_batch(batch);
  if (batch.size() == 0) return 0.0;
  const double scale = symmetric ? 0.5 : 1.0;
  double l = info_nce_direction(batch.sat, batch.uav, temperature, scale,
                                grads ? &grads->sat : nullptr, grads ? &grads->uav : nullptr);
  if (!symmetric) return l;
  l += info_nce_direction(batch.uav, batch.sat, temperature, scale,
                          grads ? &grads->uav : nullptr, grads ? &grads->sat : nullptr);
  return 0.5 * l;
}

Mined mine_hard(int anchor, const MatrixD& embeddings, std::span<const std::string> location_ids) {
  Mined m;
  const auto& loc = location_ids[static_cast<std::size_t>(anchor)];
  for (Eigen::Index j = 0; j < embeddings.rows(); ++j) {
    if (j == anchor) continue;
    const double d = row_distance(embeddings, anchor, j);
    if (location_ids[static_cast<std::size_t>(j)] == loc) {
      if (!m.p_plus || d > *m.p_plus) {
        m.p_plus = d;
        m.plus_index = static_cast<int>(j);
      }
    } else if (!m.p_minus || d < *m.p_minus) {
      m.p_minus = d;
      m.minus_index = static_cast<int>(j);
    }
  }
  return m;
}

double adaptive_weight(const std::string& anchor_location, const std::string& p_minus_location,
                       const geo::NeighborIndex& index, double alpha, WeightMode mode) {
  if (!index.contains(anchor_location))
    throw ContractError("adaptive_weight: unknown location '" + anchor_location + "'");
  if (!index.contains(p_minus_location))
    throw ContractError("adaptive_weight: unknown location '" + p_minus_location + "'");
  if (!index.neighbor_distance(anchor_location, p_minus_location)) return alpha;
  const double h = geo::neighbor_norm(anchor_location, p_minus_location, index);
  return mode == WeightMode::as_written ? alpha / h : alpha * h;
}

PartResult geo_part_loss(View view, const BatchFeatures& batch, const geo::NeighborIndex& index,
                         const LossConfig& config, BatchGradients* grads) {
  check_batch(batch);
  const MatrixD rows = view_rows(view, batch);
  const int n = static_cast<int>(rows.rows());
  PartResult r;
  struct Term {
    int anchor, pos, neg;
    double phi, x;
  };
  std::vector<Term> terms;
  for (int i = 0; i < n; ++i) {
    const Mined m = mine_hard(i, rows, batch.location_ids);
    if (!m.p_plus || !m.p_minus) {
      ++r.skipped;
      continue;
    }
    const double phi = adaptive_weight(batch.location_ids[static_cast<std::size_t>(i)],
                                       batch.location_ids[static_cast<std::size_t>(m.minus_index)],
                                       index, config.alpha, config.weight_mode);
    const double x = phi * (*m.p_plus - *m.p_minus);
    terms.push_back({i, m.plus_index, m.minus_index, phi, x});
    r.loss += softplus(x);
  }
  if (terms.empty()) return r;
  const double inv = 1.0 / static_cast<double>(terms.size());
  r.loss *= inv;
  if (grads) {
    MatrixD g = MatrixD::Zero(rows.rows(), rows.cols());
    for (const auto& t : terms) {
      const double coef = sigmoid(t.x) * t.phi * inv;
      add_distance_grad(rows, t.anchor, t.pos, coef, g);
      add_distance_grad(rows, t.anchor, t.neg, -coef, g);
    }
    scatter_grad(view, g, *grads);
  }
  return r;
}

PartResult triplet_part_loss(View view, const BatchFeatures& batch, double margin,
                             bool hard_mining, std::uint64_t seed, BatchGradients* grads) {
  check_batch(batch);
  const MatrixD rows = view_rows(view, batch);
  const int n = static_cast<int>(rows.rows());
  PartResult r;
  struct Term {
    int anchor, pos, neg;
    double value;
  };
  std::vector<Term> terms;
  for (int i = 0; i < n; ++i) {
    int pos = -1, neg = -1;
    if (hard_mining) {
      const Mined m = mine_hard(i, rows, batch.location_ids);
      pos = m.plus_index;
      neg = m.minus_index;
    } else {
      std::vector<int> ps, ns;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        (batch.location_ids[static_cast<std::size_t>(j)] == batch.location_ids[static_cast<std::size_t>(i)]
             ? ps
             : ns)
            .push_back(j);
      }
      if (!ps.empty() && !ns.empty()) {
        Rng rng(mix_keys({seed, static_cast<std::uint64_t>(view), static_cast<std::uint64_t>(i)}));
        pos = ps[rng.below(ps.size())];
        neg = ns[rng.below(ns.size())];
      }
    }
    if (pos < 0 || neg < 0) {
      ++r.skipped;
      continue;
    }
    const double v = row_distance(rows, i, pos) - row_distance(rows, i, neg) + margin;
    terms.push_back({i, pos, neg, v});
    r.loss += std::max(v, 0.0);
  }
  if (terms.empty()) return r;
  const double inv = 1.0 / static_cast<double>(terms.size());
  r.loss *= inv;
  if (grads) {
    MatrixD g = MatrixD::Zero(rows.rows(), rows.cols());
    for (const auto& t : terms) {
      if (t.value <= 0) continue;
      add_distance_grad(rows, t.anchor, t.pos, inv, g);
      add_distance_grad(rows, t.anchor, t.neg, -inv, g);
    }
    scatter_grad(view, g, *grads);
  }
  return r;
}

double baseline_triplet(const BatchFeatures& batch, double margin, bool hard_mining,
                        std::uint64_t seed, BatchGradients* grads) {
  double total = 0;
  for (View v : {View::satellite, View::uav, View::concat})
    total += triplet_part_loss(v, batch, margin, hard_mining, seed, grads).loss;
  return total;
}

LossBreakdown total_loss(const BatchFeatures& batch, const geo::NeighborIndex& index,
                         const LossConfig& config, BatchGradients* grads, std::uint64_t seed) {
  config.validate();
  check_batch(batch);
  LossBreakdown out;
  out.l_p = info_nce(batch, config.temperature, config.symmetric_infonce, grads);

  auto part = [&](bool enabled, View view, double& slot) {
    if (!enabled) return;
    PartResult r;
    if (config.objective == Objective::g2cl)
      r = geo_part_loss(view, batch, index, config, grads);
    else
      r = triplet_part_loss(view, batch, config.triplet_margin,
                            config.objective == Objective::hard_triplet, seed, grads);
    slot = r.loss;
    out.skipped_anchors += r.skipped;
  };
  part(config.enable_gs, View::satellite, out.l_gs);
  part(config.enable_gu, View::uav, out.l_gu);
  part(config.enable_gc, View::concat, out.l_gc);
  out.l_g = out.l_gs + out.l_gu + out.l_gc;
  out.total = out.l_p + out.l_g;
  return out;
}

}  // namespace g2cl::loss
