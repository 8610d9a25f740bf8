#pragma once

// Central finite differences against analytic batch gradients.

#include <algorithm>
#include <cmath>
#include <functional>

#include "g2cl/loss.hpp"
#include "oracles.hpp"

namespace testutil {

using LossFn = std::function<double(const g2cl::loss::BatchFeatures&, g2cl::loss::BatchGradients*)>;

// ||analytic - numeric|| / max(||analytic||, ||numeric||), 0 when both vanish.
inline double gradient_rel_error(const g2cl::loss::BatchFeatures& batch, const LossFn& f, double step = 1e-4) {
  auto analytic = g2cl::loss::BatchGradients::zeros_like(batch);
  f(batch, &analytic);
  auto numeric = g2cl::loss::BatchGradients::zeros_like(batch);
  auto probe = batch;
  for (int which = 0; which < 2; ++which) {
    g2cl::MatrixD& m = which == 0 ? probe.sat : probe.uav;
    g2cl::MatrixD& g = which == 0 ? numeric.sat : numeric.uav;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double keep = m(i, j);
        m(i, j) = keep + step;
        const double up = f(probe, nullptr);
        m(i, j) = keep - step;
        const double down = f(probe, nullptr);
        m(i, j) = keep;
        g(i, j) = (up - down) / (2 * step);
      }
  }
  const double diff = std::sqrt((analytic.sat - numeric.sat).squaredNorm() + (analytic.uav - numeric.uav).squaredNorm());
  const double scale = std::max(std::sqrt(analytic.sat.squaredNorm() + analytic.uav.squaredNorm()),
                                std::sqrt(numeric.sat.squaredNorm() + numeric.uav.squaredNorm()));
  return scale < 1e-12 ? diff : diff / scale;
}

// True when every mining choice in every view is separated from the
// runner-up by at least `guard`, and no hinge sits within `guard` of its kink.
inline bool away_from_ties(const g2cl::loss::BatchFeatures& b, double guard, double margin) {
  const auto sat = oracle::rows_of(b.sat), uav = oracle::rows_of(b.uav);
  for (auto v : {g2cl::loss::View::satellite, g2cl::loss::View::uav, g2cl::loss::View::concat}) {
    const auto rows = oracle::view_rows(v, sat, uav);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::vector<double> pos, neg;
      for (std::size_t j = 0; j < rows.size(); ++j) {
        if (j == i) continue;
        const double d = oracle::dist(rows[i], rows[j]);
        if (d < guard) return false;
        (b.location_ids[j] == b.location_ids[i] ? pos : neg).push_back(d);
      }
      std::sort(pos.begin(), pos.end());
      std::sort(neg.begin(), neg.end());
      if (pos.size() > 1 && pos[pos.size() - 1] - pos[pos.size() - 2] < guard) return false;
      if (neg.size() > 1 && neg[1] - neg[0] < guard) return false;
      // Every (positive, negative) combination stays off the hinge kink.
      for (double p : pos)
        for (double n : neg)
          if (std::abs(p - n + margin) < guard) return false;
    }
  }
  return true;
}

}  // namespace testutil
