#pragma once
// Monotone recalibrators fit on (surrogate, label) pairs: weighted isotonic
// regression by pool-adjacent-violators, the gamma-mixture of a local and a
// global fit, affine maps, and the finite-population conditional mean m(z).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppimt/core_data.hpp"
#include "ppimt/error.hpp"

namespace ppimt {

struct IsotonicFit {
  std::vector<double> knots_x;  // strictly increasing
  std::vector<double> knots_y;  // non-decreasing

  bool empty() const noexcept { return knots_x.empty(); }
  double x_min() const { return knots_x.front(); }
  double x_max() const { return knots_x.back(); }
};

/// Weighted least-squares non-decreasing fit of y on x. Tied x values are
/// merged into one knot (weighted mean, summed weight) before pooling.
inline IsotonicFit pava_fit(std::span<const double> x, std::span<const double> y,
                            std::optional<std::span<const double>> weights = std::nullopt) {
  if (x.size() != y.size() || (weights && weights->size() != x.size()))
    detail::fail(Errc::LengthMismatch, "pava_fit inputs differ in length");
  if (x.empty()) detail::fail(Errc::EmptyFit, "pava_fit needs at least one point");
  if (weights)
    for (double w : *weights)
      if (!(w > 0.0)) detail::fail(Errc::NonPositiveWeight, "pava_fit weight " + std::to_string(w));

  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Full (x, y, w) ordering: the fit depends only on the multiset of points,
  // bit for bit, not on the order they were pooled in.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    if (y[a] != y[b]) return y[a] < y[b];
    return weights ? (*weights)[a] < (*weights)[b] : false;
  });

  struct Block {
    double sum_wy;
    double weight;
    std::size_t first_knot;  // index into knot arrays
    double value() const { return sum_wy / weight; }
  };

  IsotonicFit fit;
  std::vector<Block> blocks;
  blocks.reserve(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    const double xv = x[order[i]];
    double sw = 0.0, swy = 0.0;
    for (; i < order.size() && x[order[i]] == xv; ++i) {
      const double w = weights ? (*weights)[order[i]] : 1.0;
      sw += w;
      swy += w * y[order[i]];
    }
    fit.knots_x.push_back(xv);
    blocks.push_back({swy, sw, fit.knots_x.size() - 1});
    // Only strict violators are pooled, so a fit applied to its own output is unchanged.
    while (blocks.size() > 1 && blocks[blocks.size() - 2].value() > blocks.back().value()) {
      Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum_wy += top.sum_wy;
      blocks.back().weight += top.weight;
    }
  }

  fit.knots_y.resize(fit.knots_x.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::size_t end = b + 1 < blocks.size() ? blocks[b + 1].first_knot : fit.knots_x.size();
    std::fill(fit.knots_y.begin() + static_cast<std::ptrdiff_t>(blocks[b].first_knot),
              fit.knots_y.begin() + static_cast<std::ptrdiff_t>(end), blocks[b].value());
  }
  return fit;
}

/// Linear interpolation between knots, clamped outside the training support.
inline double isotonic_predict(const IsotonicFit& fit, double z) {
  if (fit.empty()) detail::fail(Errc::EmptyFit, "isotonic_predict on an empty fit");
  if (z <= fit.knots_x.front()) return fit.knots_y.front();
  if (z >= fit.knots_x.back()) return fit.knots_y.back();
  const auto hi = static_cast<std::size_t>(
      std::upper_bound(fit.knots_x.begin(), fit.knots_x.end(), z) - fit.knots_x.begin());
  const std::size_t lo = hi - 1;
  const double x0 = fit.knots_x[lo], x1 = fit.knots_x[hi];
  const double y0 = fit.knots_y[lo], y1 = fit.knots_y[hi];
  if (y0 == y1) return y0;
  const double t = (z - x0) / (x1 - x0);
  return y0 + t * (y1 - y0);
}

inline std::vector<double> isotonic_predict(const IsotonicFit& fit, std::span<const double> z) {
  std::vector<double> out;
  out.reserve(z.size());
  for (double v : z) out.push_back(isotonic_predict(fit, v));
  return out;
}

struct MixtureRecalibrator {
  double gamma = 0.0;
  IsotonicFit local;
  IsotonicFit global;

  double operator()(double z) const {
    return gamma * isotonic_predict(local, z) + (1.0 - gamma) * isotonic_predict(global, z);
  }
};

inline std::vector<double> affine_recalibrate(double a, double b, std::span<const double> z_values) {
  std::vector<double> out;
  out.reserve(z_values.size());
  for (double z : z_values) out.push_back(a * z + b);
  return out;
}

struct ConditionalMeanFit {
  std::vector<double> support;  // ascending distinct surrogate values
  std::vector<double> means;
  std::vector<std::size_t> counts;

  /// m(z) for a z in the support. Values outside the support are an error.
  double operator()(double z) const {
    const auto it = std::lower_bound(support.begin(), support.end(), z);
    if (it == support.end() || *it != z)
      detail::fail(Errc::EmptyFit, "conditional mean queried off its support");
    return means[static_cast<std::size_t>(it - support.begin())];
  }
};

/// Group-by exact equality of y_hat; per-group averages of y.
inline ConditionalMeanFit conditional_mean_fit(std::span<const double> y_hat, std::span<const double> y) {
  if (y_hat.size() != y.size()) detail::fail(Errc::LengthMismatch, "conditional_mean_fit inputs differ in length");
  if (y_hat.empty()) detail::fail(Errc::TooSmall, "conditional_mean_fit needs at least one point");
  std::vector<std::size_t> order(y_hat.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y_hat[a] < y_hat[b]; });
  ConditionalMeanFit out;
  std::size_t i = 0;
  while (i < order.size()) {
    const double z = y_hat[order[i]];
    double acc = 0.0;
    std::size_t c = 0;
    for (; i < order.size() && y_hat[order[i]] == z; ++i, ++c) acc += y[order[i]];
    out.support.push_back(z);
    out.means.push_back(acc / static_cast<double>(c));
    out.counts.push_back(c);
  }
  return out;
}

/// Pools every labeled (y_hat, y) pair outside `exclude_task_id` and fits PAVA.
inline IsotonicFit fit_global_recalibrator(const MultiTaskStudy& study, const std::string& exclude_task_id) {
  std::vector<double> xs, ys;
  for (const auto& task : study.tasks) {
    if (task.task_id == exclude_task_id) continue;
    for (std::size_t i = 0; i < task.size(); ++i) {
      if (!task.labeled[i]) continue;
      xs.push_back(task.y_hat[i]);
      ys.push_back(*task.y[i]);
    }
  }
  if (xs.empty())
    detail::fail(Errc::NoAuxiliaryLabels, "no labeled points outside task '" + exclude_task_id + "'");
  return pava_fit(xs, ys);
}

}  // namespace ppimt
