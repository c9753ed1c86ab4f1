#pragma once
// Closed-form variance of the lambda-tuned rectified mean estimator under
// simple random sampling without replacement, its minimiser over lambda,
// the superpopulation analogues, and an exhaustive-enumeration oracle that
// computes the estimator's exact law on tiny populations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ppimt/core_data.hpp"
#include "ppimt/error.hpp"
#include "ppimt/recalibration.hpp"

namespace ppimt {

struct VarianceReport {
  double v_of_lambda = 0.0;
  double lambda_star = 0.0;
  double v_star = 0.0;
  double fpc = 0.0;  // (1/n)(1 - n/N)
  double rho_sq = 0.0;
};

namespace detail {

inline void check_population(std::span<const double> y, std::span<const double> s, std::size_t n) {
  require_same_length(y, s);
  if (y.size() < 2) fail(Errc::TooSmall, "population needs at least 2 items");
  if (n < 1 || n > y.size())
    fail(Errc::BadSampleSize, "n=" + std::to_string(n) + " with N=" + std::to_string(y.size()));
}

}  // namespace detail

/// (1/n)(1 - n/N): the factor multiplying S^2 in the SRS variance.
inline double fpc_factor(std::size_t n, std::size_t N) {
  const auto nd = static_cast<double>(n), Nd = static_cast<double>(N);
  return (1.0 / nd) * (1.0 - nd / Nd);
}

/// V(s, lambda) = (1/n)(1 - (n-1)/(N-1)) [sigma_Y^2 - 2 lambda Cov_N(Y,s) + lambda^2 Var_N(s)].
inline double variance_functional(std::span<const double> y, std::span<const double> s, std::size_t n,
                                  double lambda) {
  detail::check_population(y, s, n);
  const auto nd = static_cast<double>(n), Nd = static_cast<double>(y.size());
  const double factor = (1.0 / nd) * (1.0 - (nd - 1.0) / (Nd - 1.0));
  const double sigma_y = finite_pop_var(y);
  const double cov = finite_pop_cov(y, s);
  const double var_s = finite_pop_var(s);
  return factor * (sigma_y - 2.0 * lambda * cov + lambda * lambda * var_s);
}

inline double lambda_star(std::span<const double> y, std::span<const double> s) {
  const double var_s = finite_pop_var(s);
  if (!(var_s > 0.0)) detail::fail(Errc::DegenerateSurrogate, "surrogate has zero finite-population variance");
  return finite_pop_cov(y, s) / var_s;
}

/// Oracle power-tuned variance V*(s) = (1/n)(1 - n/N) S_Y^2 (1 - rho_N^2(Y, s)).
/// A constant surrogate falls back to lambda*=0, rho^2=0 (the classical variance).
/// `v_of_lambda` is evaluated at `query_lambda`, or at lambda* when absent.
inline VarianceReport oracle_variance(std::span<const double> y, std::span<const double> s, std::size_t n,
                                      std::optional<double> query_lambda = std::nullopt) {
  detail::check_population(y, s, n);
  const auto moments = population_moments(y);
  if (!(moments.var_n > 0.0)) detail::fail(Errc::DegenerateOutcome, "outcome has zero variance");
  VarianceReport r;
  r.fpc = fpc_factor(n, y.size());
  const double var_s = finite_pop_var(s);
  if (var_s > 0.0) {
    const double cov = finite_pop_cov(y, s);
    r.lambda_star = cov / var_s;
    r.rho_sq = std::clamp(cov * cov / (moments.var_n * var_s), 0.0, 1.0);
  }
  r.v_star = r.fpc * moments.var_sample * (1.0 - r.rho_sq);
  r.v_of_lambda = variance_functional(y, s, n, query_lambda.value_or(r.lambda_star));
  return r;
}

/// R^2 of the finite-population nonparametric regression of y on y_hat:
/// Var_N(m(Y_hat)) / Var_N(Y).
inline double nonparametric_r2(std::span<const double> y, std::span<const double> y_hat) {
  const double var_y = finite_pop_var(y);
  if (!(var_y > 0.0)) detail::fail(Errc::DegenerateOutcome, "outcome has zero variance");
  const auto m = conditional_mean_fit(y_hat, y);
  std::vector<double> m_of;
  m_of.reserve(y_hat.size());
  for (double z : y_hat) m_of.push_back(m(z));
  return finite_pop_var(m_of) / var_y;
}

/// V*(id) - inf_phi V*(phi) = (1/n)(1 - n/N) S_Y^2 (R^2 - rho^2(Y, Y_hat)).
/// Differences at the level of rounding (affine m) are reported as exactly 0.
inline double max_gain(std::span<const double> y, std::span<const double> y_hat, std::size_t n) {
  detail::check_population(y, y_hat, n);
  const auto moments = population_moments(y);
  if (!(moments.var_n > 0.0)) detail::fail(Errc::DegenerateOutcome, "outcome has zero variance");
  const double r2 = nonparametric_r2(y, y_hat);
  const double rho2 = squared_correlation(y, y_hat);
  const double gap = r2 - rho2;
  if (gap <= 64.0 * std::numeric_limits<double>::epsilon()) return 0.0;
  return fpc_factor(n, y.size()) * moments.var_sample * gap;
}

// ---- superpopulation (independent unlabeled sample of size n_unlabeled) ---

inline double superpop_lambda_star(double cov_ys, double var_s, std::size_t n, std::size_t n_unlabeled) {
  if (!(var_s > 0.0)) detail::fail(Errc::DegenerateSurrogate, "var_s must be positive");
  if (n < 1 || n_unlabeled < 1) detail::fail(Errc::BadSampleSize, "sample sizes must be >= 1");
  const auto nd = static_cast<double>(n), Nd = static_cast<double>(n_unlabeled);
  return (Nd / (nd + Nd)) * cov_ys / var_s;
}

/// V_sup(s, lambda) = Var(Y)/n - 2 lambda Cov(Y,s)/n + lambda^2 (1/n + 1/N) Var(s).
inline double superpop_variance(double var_y, double cov_ys, double var_s, std::size_t n, std::size_t n_unlabeled,
                                double lambda) {
  if (var_y < 0.0 || var_s < 0.0) detail::fail(Errc::BadSpec, "variances must be non-negative");
  if (n < 1 || n_unlabeled < 1) detail::fail(Errc::BadSampleSize, "sample sizes must be >= 1");
  const auto nd = static_cast<double>(n), Nd = static_cast<double>(n_unlabeled);
  return var_y / nd - 2.0 * lambda * cov_ys / nd + lambda * lambda * (1.0 / nd + 1.0 / Nd) * var_s;
}

/// Closed form at lambda*_sup: (Var(Y)/n)(1 - N/(n+N) rho^2).
inline double superpop_oracle_variance(double var_y, double cov_ys, double var_s, std::size_t n,
                                       std::size_t n_unlabeled) {
  if (!(var_y > 0.0) || !(var_s > 0.0)) detail::fail(Errc::DegenerateOutcome, "variances must be positive");
  const auto nd = static_cast<double>(n), Nd = static_cast<double>(n_unlabeled);
  const double rho2 = cov_ys * cov_ys / (var_y * var_s);
  return (var_y / nd) * (1.0 - (Nd / (nd + Nd)) * rho2);
}

// ---- exhaustive oracle -----------------------------------------------------

struct EstimatorLaw {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t n_subsets = 0;
};

inline constexpr std::size_t kMaxEnumerationPopulation = 16;
inline constexpr double kMaxEnumerationSubsets = 1e6;

inline double binomial(std::size_t n, std::size_t k) {
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(c);
}

/// Exact mean and variance of theta_hat_lambda over all C(N, n) labeled subsets.
inline EstimatorLaw brute_force_estimator_law(std::span<const double> y, std::span<const double> s, std::size_t n,
                                              double lambda) {
  detail::check_population(y, s, n);
  const std::size_t N = y.size();
  if (N > kMaxEnumerationPopulation || binomial(N, n) > kMaxEnumerationSubsets)
    detail::fail(Errc::TooLargeToEnumerate, "C(" + std::to_string(N) + "," + std::to_string(n) + ") too large");

  const double s_bar = mean_of(s);
  std::vector<double> thetas;
  thetas.reserve(static_cast<std::size_t>(binomial(N, n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const auto nd = static_cast<double>(n);
  while (true) {
    double sy = 0.0, ss = 0.0;
    for (auto i : idx) {
      sy += y[i];
      ss += s[i];
    }
    thetas.push_back(sy / nd + lambda * (s_bar - ss / nd));
    // next combination in lexicographic order
    std::size_t k = n;
    while (k > 0 && idx[k - 1] == N - n + (k - 1)) --k;
    if (k == 0) break;
    ++idx[k - 1];
    for (std::size_t j = k; j < n; ++j) idx[j] = idx[j - 1] + 1;
  }

  EstimatorLaw law;
  law.n_subsets = thetas.size();
  long double acc = 0.0L;
  for (double t : thetas) acc += t;
  law.mean = static_cast<double>(acc / static_cast<long double>(thetas.size()));
  long double ss = 0.0L;
  for (double t : thetas) ss += (static_cast<long double>(t) - law.mean) * (static_cast<long double>(t) - law.mean);
  law.variance = static_cast<double>(ss / static_cast<long double>(thetas.size()));
  return law;
}

}  // namespace ppimt
