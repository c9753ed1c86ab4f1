#pragma once
// Data model for multi-task finite-population mean estimation, plus the
// moment conventions every downstream formula relies on:
//   Var_N / Cov_N  divide by N   (population sigma^2)
//   S^2            divides by N-1
//   labeled plug-ins divide by n-1 on the labeled subset

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ppimt/error.hpp"

namespace ppimt {

struct TaskDataset {
  std::string task_id;
  std::vector<double> y_hat;
  std::vector<std::optional<double>> y;
  std::vector<bool> labeled;

  std::size_t size() const noexcept { return y_hat.size(); }
};

struct MultiTaskStudy {
  std::vector<TaskDataset> tasks;

  std::size_t num_tasks() const noexcept { return tasks.size(); }
};

struct PopulationMoments {
  double mean = 0.0;
  double var_n = 0.0;
  double var_sample = 0.0;
  std::size_t n_points = 0;
};

// Index-order summation everywhere so that equal inputs give bitwise-equal
// means (census exactness depends on it).
inline double mean_of(std::span<const double> v) {
  const auto n = static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += x;
  const double m = acc / n;
  // one correction pass; makes constant inputs come back exactly
  double r = 0.0;
  for (double x : v) r += x - m;
  return m + r / n;
}

namespace detail {

inline double centered_cross_sum(std::span<const double> u, std::span<const double> v) {
  const double mu = mean_of(u);
  const double mv = mean_of(v);
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += (u[i] - mu) * (v[i] - mv);
  return acc;
}

inline void require_same_length(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    fail(Errc::LengthMismatch,
         "vectors of length " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
}

}  // namespace detail

inline PopulationMoments population_moments(std::span<const double> values) {
  if (values.size() < 2) detail::fail(Errc::TooSmall, "population_moments needs at least 2 values");
  for (double v : values)
    if (!std::isfinite(v)) detail::fail(Errc::NonFiniteValue, "population_moments input");
  const double ss = detail::centered_cross_sum(values, values);
  const auto n = static_cast<double>(values.size());
  return {mean_of(values), ss / n, ss / (n - 1.0), values.size()};
}

/// Cov_N(u, v) with divisor N.
inline double finite_pop_cov(std::span<const double> u, std::span<const double> v) {
  detail::require_same_length(u, v);
  if (u.size() < 2) detail::fail(Errc::TooSmall, "finite_pop_cov needs at least 2 points");
  return detail::centered_cross_sum(u, v) / static_cast<double>(u.size());
}

inline double finite_pop_var(std::span<const double> u) { return finite_pop_cov(u, u); }

/// Cov with divisor n-1, the labeled-subset plug-in convention.
inline double sample_cov(std::span<const double> u, std::span<const double> v) {
  detail::require_same_length(u, v);
  if (u.size() < 2) detail::fail(Errc::TooSmall, "sample_cov needs at least 2 points");
  return detail::centered_cross_sum(u, v) / static_cast<double>(u.size() - 1);
}

inline double sample_var(std::span<const double> u) { return sample_cov(u, u); }

/// Squared Pearson correlation; zero when either side has no spread.
inline double squared_correlation(std::span<const double> u, std::span<const double> v) {
  detail::require_same_length(u, v);
  const double cuv = detail::centered_cross_sum(u, v);
  const double cuu = detail::centered_cross_sum(u, u);
  const double cvv = detail::centered_cross_sum(v, v);
  if (!(cuu > 0.0) || !(cvv > 0.0)) return 0.0;
  return (cuv * cuv) / (cuu * cvv);
}

inline TaskDataset validate_task_dataset(TaskDataset raw) {
  const std::size_t n = raw.y_hat.size();
  if (raw.y.size() != n || raw.labeled.size() != n)
    detail::fail(Errc::LengthMismatch, "task '" + raw.task_id + "': y_hat/y/labeled lengths differ");
  if (n < 2) detail::fail(Errc::TooSmall, "task '" + raw.task_id + "' has fewer than 2 items");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(raw.y_hat[i]))
      detail::fail(Errc::NonFiniteValue, "task '" + raw.task_id + "' y_hat[" + std::to_string(i) + "]");
    if (raw.y[i] && !std::isfinite(*raw.y[i]))
      detail::fail(Errc::NonFiniteValue, "task '" + raw.task_id + "' y[" + std::to_string(i) + "]");
    if (raw.labeled[i] && !raw.y[i])
      detail::fail(Errc::MissingLabel, "task '" + raw.task_id + "' item " + std::to_string(i) +
                                           " is labeled but has no y");
  }
  return raw;
}

inline MultiTaskStudy validate_study(MultiTaskStudy study) {
  if (study.tasks.empty()) detail::fail(Errc::TooSmall, "study has no tasks");
  std::unordered_set<std::string> seen;
  for (auto& t : study.tasks) {
    t = validate_task_dataset(std::move(t));
    if (!seen.insert(t.task_id).second)
      detail::fail(Errc::DuplicateTaskId, "task id '" + t.task_id + "' appears twice");
  }
  return study;
}

// ---- derived views -------------------------------------------------------

inline std::vector<std::size_t> labeled_indices(const TaskDataset& task) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < task.size(); ++i)
    if (task.labeled[i]) idx.push_back(i);
  return idx;
}

inline bool has_full_ground_truth(const TaskDataset& task) {
  for (const auto& v : task.y)
    if (!v) return false;
  return true;
}

/// theta_star: the finite-population mean of y. Requires every y present.
inline double population_mean(const TaskDataset& task) {
  std::vector<double> y;
  y.reserve(task.size());
  for (const auto& v : task.y) {
    if (!v) detail::fail(Errc::MissingLabel, "task '" + task.task_id + "' lacks full ground truth");
    y.push_back(*v);
  }
  return mean_of(y);
}

inline std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(values[i]);
  return out;
}

inline std::vector<double> gather_labels(const TaskDataset& task, std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(*task.y[i]);
  return out;
}

}  // namespace ppimt
