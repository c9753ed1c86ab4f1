#pragma once
// Studentized Wald intervals with finite-population correction.
//
//   V_hat = (1/n)(1 - n/N) S_r^2,   S_r^2 = sum (r_i - r_bar)^2 / (n-1)
//   CI    = theta_hat +/- t_{n-1, 1-alpha/2} sqrt(V_hat)
//
// The t quantile inverts the regularized incomplete beta function.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "ppimt/core_data.hpp"
#include "ppimt/error.hpp"
#include "ppimt/estimators.hpp"

namespace ppimt {

struct ConfidenceInterval {
  double level = 0.95;
  double lower = 0.0;
  double upper = 0.0;
  double se = 0.0;
  std::size_t dof = 0;

  double width() const noexcept { return upper - lower; }
  bool contains(double v) const noexcept { return lower <= v && v <= upper; }
};

namespace detail {

// Continued fraction for I_x(a,b) (modified Lentz), valid for x < (a+1)/(a+b+2).
inline double ibeta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m < 100000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b). `one_minus_x` is passed separately
/// so callers can supply it without cancellation.
inline double regularized_incomplete_beta(double a, double b, double x, double one_minus_x) {
  if (x <= 0.0) return 0.0;
  if (one_minus_x <= 0.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(one_minus_x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::ibeta_cf(a, b, x) / a;
  return 1.0 - front * detail::ibeta_cf(b, a, one_minus_x) / b;
}

/// P(T > t) for t >= 0 under Student-t with `dof` degrees of freedom.
inline double student_t_upper_tail(double t, double dof) {
  const double t2 = t * t;
  const double x = dof / (dof + t2);
  const double one_minus_x = t2 / (dof + t2);
  return 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, x, one_minus_x);
}

inline double student_t_pdf(double t, double dof) {
  const double log_c = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * M_PI);
  return std::exp(log_c - 0.5 * (dof + 1.0) * std::log1p(t * t / dof));
}

/// Quantile of Student-t by bracketed Newton iteration on the upper tail.
inline double student_t_quantile(double p, std::size_t dof) {
  if (!(p > 0.0 && p < 1.0)) detail::fail(Errc::BadProbability, "p=" + std::to_string(p));
  if (dof < 1) detail::fail(Errc::BadDof, "dof must be >= 1");
  if (p == 0.5) return 0.0;
  const double nu = static_cast<double>(dof);
  const bool upper = p > 0.5;
  const double q = upper ? 1.0 - p : p;  // target upper-tail mass of |t|

  double lo = 0.0, hi = 1.0;
  while (student_t_upper_tail(hi, nu) > q) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) break;
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = student_t_upper_tail(t, nu) - q;  // decreasing in t
    if (f > 0.0)
      lo = t;
    else
      hi = t;
    double next = t + f / student_t_pdf(t, nu);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - t) <= 4.0 * std::numeric_limits<double>::epsilon() * std::fabs(next)) {
      t = next;
      break;
    }
    t = next;
  }
  return upper ? t : -t;
}

inline ConfidenceInterval wald_ci(double theta_hat, std::span<const double> residuals, std::size_t n, std::size_t N,
                                  double alpha = 0.05) {
  if (residuals.size() != n || n < 2)
    detail::fail(Errc::TooFewResiduals, "wald_ci needs n >= 2 residuals matching n");
  if (n > N) detail::fail(Errc::BadSampleSize, "n exceeds N");
  if (!(alpha > 0.0 && alpha < 1.0)) detail::fail(Errc::BadAlpha, "alpha=" + std::to_string(alpha));
  const double s2 = sample_var(residuals);
  const auto nd = static_cast<double>(n), Nd = static_cast<double>(N);
  const double se = std::sqrt((1.0 / nd) * (1.0 - nd / Nd) * s2);
  const double half = student_t_quantile(1.0 - alpha / 2.0, n - 1) * se;
  return {1.0 - alpha, theta_hat - half, theta_hat + half, se, n - 1};
}

/// Recomputes the residual sequence each method should produce and checks it
/// against the one the estimator stored.
inline std::vector<double> residuals_for_method(const EstimateResult& result, const TaskDataset& task,
                                                double tolerance = 1e-12) {
  const auto idx = labeled_indices(task);
  const auto y = gather_labels(task, idx);
  std::vector<double> r(y.size());
  switch (result.method) {
    case Method::Classical: r = y; break;
    case Method::Ppi:
      for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - task.y_hat[idx[i]];
      break;
    case Method::PpiPlusPlus:
      for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - result.lambda_used * task.y_hat[idx[i]];
      break;
    case Method::Reppi2:
    case Method::Greppi:
    case Method::Areppi: {
      if (!result.s_values_full || result.s_values_full->size() != task.size())
        detail::fail(Errc::ResidualMismatch, "result carries no recalibrated surrogate for this task");
      const auto& s = *result.s_values_full;
      for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - result.lambda_used * s[idx[i]];
      break;
    }
  }
  if (r.size() != result.residuals.size())
    detail::fail(Errc::ResidualMismatch, "residual count differs from labeled count");
  for (std::size_t i = 0; i < r.size(); ++i)
    if (std::fabs(r[i] - result.residuals[i]) > tolerance)
      detail::fail(Errc::ResidualMismatch, std::string(method_name(result.method)) + " residual " +
                                               std::to_string(i) + " disagrees");
  return r;
}

}  // namespace ppimt
