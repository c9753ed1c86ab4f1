#pragma once
// The estimator family for one task's finite-population mean: classical,
// PPI, PPI++, two-fold cross-fitted RePPI, and the cross-task GRePPI and
// ARePPI. All share one rectified form
//
//   theta_hat = mean_L(Y) + lambda * (mean_N(s) - mean_L(s))
//
// and return the per-item residuals needed by the Wald interval.

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppimt/core_data.hpp"
#include "ppimt/error.hpp"
#include "ppimt/recalibration.hpp"
#include "ppimt/sampling.hpp"

namespace ppimt {

enum class Method { Classical, Ppi, PpiPlusPlus, Reppi2, Greppi, Areppi };

inline constexpr std::array<Method, 6> kAllMethods{Method::Classical, Method::Ppi,    Method::PpiPlusPlus,
                                                   Method::Reppi2,    Method::Greppi, Method::Areppi};

constexpr std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::Classical: return "classical";
    case Method::Ppi: return "ppi";
    case Method::PpiPlusPlus: return "ppipp";
    case Method::Reppi2: return "reppi2";
    case Method::Greppi: return "greppi";
    case Method::Areppi: return "areppi";
  }
  return "unknown";
}

inline std::optional<Method> parse_method(std::string_view name) {
  for (auto m : kAllMethods)
    if (method_name(m) == name) return m;
  if (name == "ppi_pp" || name == "ppi++") return Method::PpiPlusPlus;
  return std::nullopt;
}

constexpr std::size_t min_labels(Method m) noexcept {
  return (m == Method::Reppi2 || m == Method::Areppi) ? 4 : 2;
}

struct EstimateResult {
  Method method = Method::Classical;
  double theta_hat = 0.0;
  double lambda_used = 0.0;
  std::vector<double> residuals;                      // labeled items, ascending index order
  std::optional<std::vector<double>> s_values_full;   // surrogate actually used, length N
  std::size_t n_labeled = 0;
  bool power_tuned = false;
  std::optional<std::array<double, 2>> gammas;        // ARePPI fold weights (A, B)
};

struct EstimatorOptions {
  bool power_tune = false;
  bool clip = true;
  std::size_t k_folds = 5;
};

inline double rectified_estimate(std::span<const double> y_labeled, std::span<const double> s_labeled,
                                 double s_full_mean, double lambda) {
  if (y_labeled.size() != s_labeled.size()) detail::fail(Errc::LengthMismatch, "labeled y and s differ in length");
  if (y_labeled.empty()) detail::fail(Errc::EmptyLabeledSet, "rectified_estimate needs labeled items");
  return mean_of(y_labeled) + lambda * (s_full_mean - mean_of(s_labeled));
}

/// Cov_L(Y, s) / Var_L(s) with divisor n-1; 0 for a constant surrogate.
inline double plug_in_lambda(std::span<const double> y_labeled, std::span<const double> s_labeled, bool clip) {
  if (y_labeled.size() != s_labeled.size()) detail::fail(Errc::LengthMismatch, "labeled y and s differ in length");
  if (y_labeled.size() < 2) detail::fail(Errc::TooSmall, "plug_in_lambda needs at least 2 labeled items");
  const double var_s = sample_var(s_labeled);
  if (!(var_s > 0.0)) return 0.0;
  const double lambda = sample_cov(y_labeled, s_labeled) / var_s;
  return clip ? std::clamp(lambda, 0.0, 1.0) : lambda;
}

namespace detail {

struct LabeledView {
  std::vector<std::size_t> idx;
  std::vector<double> y;
};

inline LabeledView labeled_view(const TaskDataset& task, Method m) {
  LabeledView v;
  v.idx = labeled_indices(task);
  if (v.idx.size() < min_labels(m))
    fail(Errc::TooFewLabels, std::string(method_name(m)) + " on task '" + task.task_id + "' needs at least " +
                                 std::to_string(min_labels(m)) + " labels, has " + std::to_string(v.idx.size()));
  v.y = gather_labels(task, v.idx);
  return v;
}

/// Shared tail of every surrogate-based method: theta_hat, residuals Y - lambda s.
inline EstimateResult finish(Method m, const LabeledView& lv, std::vector<double> s_full, double lambda,
                             bool power_tuned) {
  const auto s_lab = gather(s_full, lv.idx);
  EstimateResult r;
  r.method = m;
  r.lambda_used = lambda;
  r.theta_hat = rectified_estimate(lv.y, s_lab, mean_of(s_full), lambda);
  r.residuals.reserve(lv.y.size());
  for (std::size_t i = 0; i < lv.y.size(); ++i) r.residuals.push_back(lv.y[i] - lambda * s_lab[i]);
  r.n_labeled = lv.idx.size();
  r.power_tuned = power_tuned;
  r.s_values_full = std::move(s_full);
  return r;
}

/// Best gamma on a 101-point grid over [0,1] for rho^2(gamma a + (1-gamma) b, y);
/// ties go to the smaller gamma.
inline double best_mixture_weight(std::span<const double> local, std::span<const double> global,
                                   std::span<const double> y) {
  constexpr int kGrid = 100;
  double best_gamma = 0.0, best_rho = -1.0;
  std::vector<double> mix(y.size());
  for (int g = 0; g <= kGrid; ++g) {
    const double gamma = static_cast<double>(g) / kGrid;
    for (std::size_t i = 0; i < y.size(); ++i) mix[i] = gamma * local[i] + (1.0 - gamma) * global[i];
    const double rho = squared_correlation(mix, y);
    if (rho > best_rho) {
      best_rho = rho;
      best_gamma = gamma;
    }
  }
  return best_gamma;
}

}  // namespace detail

inline EstimateResult classical_estimate(const TaskDataset& task) {
  const auto lv = detail::labeled_view(task, Method::Classical);
  EstimateResult r;
  r.method = Method::Classical;
  r.theta_hat = mean_of(lv.y);
  r.lambda_used = 0.0;
  r.residuals = lv.y;
  r.n_labeled = lv.idx.size();
  return r;
}

inline EstimateResult ppi_estimate(const TaskDataset& task) {
  const auto lv = detail::labeled_view(task, Method::Ppi);
  return detail::finish(Method::Ppi, lv, task.y_hat, 1.0, false);
}

inline EstimateResult ppipp_estimate(const TaskDataset& task, bool clip) {
  const auto lv = detail::labeled_view(task, Method::PpiPlusPlus);
  const double lambda = plug_in_lambda(lv.y, gather(task.y_hat, lv.idx), clip);
  return detail::finish(Method::PpiPlusPlus, lv, task.y_hat, lambda, true);
}

/// GRePPI: recalibrate with an isotonic fit pooled over every other task's labels.
inline EstimateResult greppi_estimate(const TaskDataset& task, const MultiTaskStudy& study, bool power_tune,
                                      bool clip) {
  const auto lv = detail::labeled_view(task, Method::Greppi);
  const auto global = fit_global_recalibrator(study, task.task_id);
  auto s_full = isotonic_predict(global, task.y_hat);
  const double lambda = power_tune ? plug_in_lambda(lv.y, gather(s_full, lv.idx), clip) : 1.0;
  return detail::finish(Method::Greppi, lv, std::move(s_full), lambda, power_tune);
}

/// Two-fold RePPI adapted to a finite population: each fold's isotonic fit
/// predicts the other fold; unlabeled items get the average of both fits.
inline EstimateResult reppi_two_fold_estimate(const TaskDataset& task, const StreamKey& key, bool power_tune,
                                              bool clip) {
  const auto lv = detail::labeled_view(task, Method::Reppi2);
  const auto folds = split_two_folds(key.with(StreamPurpose::FoldSplit), lv.idx);

  auto fit_on = [&](const std::vector<std::size_t>& f) {
    return pava_fit(gather(task.y_hat, f), gather_labels(task, f));
  };
  const auto fit_a = fit_on(folds.fold_a);
  const auto fit_b = fit_on(folds.fold_b);

  std::vector<double> w(task.size());
  for (std::size_t i = 0; i < task.size(); ++i)
    w[i] = 0.5 * (isotonic_predict(fit_a, task.y_hat[i]) + isotonic_predict(fit_b, task.y_hat[i]));
  for (auto i : folds.fold_a) w[i] = isotonic_predict(fit_b, task.y_hat[i]);
  for (auto i : folds.fold_b) w[i] = isotonic_predict(fit_a, task.y_hat[i]);

  const double lambda = power_tune ? plug_in_lambda(lv.y, gather(w, lv.idx), clip) : 1.0;
  return detail::finish(Method::Reppi2, lv, std::move(w), lambda, power_tune);
}

/// ARePPI: per fold, mix a local isotonic fit with the global one using the
/// weight that maximises the out-of-fold squared correlation with Y, then
/// cross-apply the mixtures as in two-fold RePPI.
inline EstimateResult areppi_estimate(const TaskDataset& task, const MultiTaskStudy& study,
                                      const EstimatorOptions& opts, const StreamKey& key) {
  const auto lv = detail::labeled_view(task, Method::Areppi);
  const auto global = fit_global_recalibrator(study, task.task_id);
  const auto folds = split_two_folds(key.with(StreamPurpose::FoldSplit), lv.idx);

  auto adapt = [&](const std::vector<std::size_t>& fold, std::uint64_t which) {
    const auto x = gather(task.y_hat, fold);
    const auto y = gather_labels(task, fold);
    const std::size_t k = std::clamp<std::size_t>(opts.k_folds, 2, fold.size());
    const auto assign = kfold_assignments(key.with(StreamPurpose::KFold, which), fold.size(), k);

    std::vector<double> oof(fold.size());
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> tx, ty;
      for (std::size_t i = 0; i < fold.size(); ++i)
        if (assign[i] != j) {
          tx.push_back(x[i]);
          ty.push_back(y[i]);
        }
      const auto inner = pava_fit(tx, ty);
      for (std::size_t i = 0; i < fold.size(); ++i)
        if (assign[i] == j) oof[i] = isotonic_predict(inner, x[i]);
    }
    const auto glob = isotonic_predict(global, x);
    return MixtureRecalibrator{detail::best_mixture_weight(oof, glob, y), pava_fit(x, y), global};
  };

  const auto ada_a = adapt(folds.fold_a, 0);
  const auto ada_b = adapt(folds.fold_b, 1);

  std::vector<double> u(task.size());
  for (std::size_t i = 0; i < task.size(); ++i) u[i] = 0.5 * (ada_a(task.y_hat[i]) + ada_b(task.y_hat[i]));
  for (auto i : folds.fold_a) u[i] = ada_b(task.y_hat[i]);
  for (auto i : folds.fold_b) u[i] = ada_a(task.y_hat[i]);

  const double lambda = opts.power_tune ? plug_in_lambda(lv.y, gather(u, lv.idx), opts.clip) : 1.0;
  auto r = detail::finish(Method::Areppi, lv, std::move(u), lambda, opts.power_tune);
  r.gammas = std::array<double, 2>{ada_a.gamma, ada_b.gamma};
  return r;
}

/// Uniform entry point used by the runner and the CLI.
inline EstimateResult estimate(Method m, const TaskDataset& task, const MultiTaskStudy& study,
                               const EstimatorOptions& opts, const StreamKey& key) {
  switch (m) {
    case Method::Classical: return classical_estimate(task);
    case Method::Ppi: return ppi_estimate(task);
    case Method::PpiPlusPlus: return ppipp_estimate(task, opts.clip);
    case Method::Reppi2: return reppi_two_fold_estimate(task, key, opts.power_tune, opts.clip);
    case Method::Greppi: return greppi_estimate(task, study, opts.power_tune, opts.clip);
    case Method::Areppi: return areppi_estimate(task, study, opts, key);
  }
  detail::fail(Errc::ConfigInvalid, "unknown method");
}

}  // namespace ppimt
