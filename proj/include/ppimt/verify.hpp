#pragma once
// Randomised checks of the variance theory against exact enumeration and
// the finite-population identities; drives the `verify` subcommand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ppimt/core_data.hpp"
#include "ppimt/recalibration.hpp"
#include "ppimt/sampling.hpp"
#include "ppimt/variance_theory.hpp"

namespace ppimt {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double max_deviation = 0.0;
  double tolerance = 0.0;
};

struct VerifyHooks {
  double lambda_star_offset = 0.0;  // negative control: shifts the reported lambda*
};

namespace detail {

struct Population {
  std::vector<double> y;
  std::vector<double> y_hat;
};

// Continuous scores, generic (no ties).
inline Population random_population(Rng& rng, std::size_t n_min, std::size_t n_max) {
  const std::size_t N = n_min + rng.below(n_max - n_min + 1);
  Population p;
  for (std::size_t i = 0; i < N; ++i) {
    const double x = rng.uniform01();
    p.y_hat.push_back(x);
    p.y.push_back(std::sin(3.0 * x) + 0.5 * rng.normal());
  }
  return p;
}

// Scores on a small grid so that m(z) averages several items.
inline Population random_tied_population(Rng& rng, std::size_t N, std::size_t levels) {
  Population p;
  for (std::size_t i = 0; i < N; ++i) {
    const double z = static_cast<double>(rng.below(levels)) / static_cast<double>(levels - 1);
    p.y_hat.push_back(z);
    p.y.push_back(z * z + 0.3 * rng.normal());
  }
  return p;
}

inline std::vector<double> random_lookup(Rng& rng, const ConditionalMeanFit& m, std::span<const double> y_hat) {
  std::vector<double> table(m.support.size());
  for (auto& v : table) v = rng.uniform(-2.0, 2.0);
  std::vector<double> out;
  for (double z : y_hat) {
    const auto k = std::lower_bound(m.support.begin(), m.support.end(), z) - m.support.begin();
    out.push_back(table[static_cast<std::size_t>(k)]);
  }
  return out;
}

inline std::vector<double> apply_m(const ConditionalMeanFit& m, std::span<const double> y_hat) {
  std::vector<double> out;
  for (double z : y_hat) out.push_back(m(z));
  return out;
}

inline void record(PropertyResult& r, double deviation) { r.max_deviation = std::max(r.max_deviation, deviation); }

}  // namespace detail

inline std::vector<PropertyResult> run_theory_suite(std::uint64_t seed, const VerifyHooks& hooks = {}) {
  std::vector<PropertyResult> results;
  Rng rng(StreamKey{seed, 0, 0, StreamPurpose::DataGeneration, 7});
  const double lambdas[] = {-1.0, 0.0, 0.5, 1.0, 2.0};

  {
    PropertyResult var{"exact_variance_law", false, 0.0, 1e-10};
    PropertyResult unb{"finite_sample_unbiasedness", false, 0.0, 1e-12};
    for (int rep = 0; rep < 200; ++rep) {
      const auto p = detail::random_population(rng, 2, 10);
      const double theta = mean_of(p.y);
      for (std::size_t n = 1; n <= p.y.size(); ++n)
        for (double lam : lambdas) {
          const auto law = brute_force_estimator_law(p.y, p.y_hat, n, lam);
          detail::record(var, std::fabs(law.variance - variance_functional(p.y, p.y_hat, n, lam)));
          detail::record(unb, std::fabs(law.mean - theta));
        }
    }
    results.push_back(var);
    results.push_back(unb);
  }

  {
    PropertyResult r{"hand_cell_y1234_n2", false, 0.0, 1e-12};
    const std::vector<double> y{1, 2, 3, 4}, s{0, 0, 0, 0};
    detail::record(r, std::fabs(variance_functional(y, s, 2, 0.0) - 5.0 / 12.0));
    detail::record(r, std::fabs(brute_force_estimator_law(y, s, 2, 0.7).variance - 5.0 / 12.0));
    results.push_back(r);
  }

  {
    PropertyResult fpc{"fpc_forms_agree", false, 0.0, 1e-12};
    PropertyResult mini{"lambda_star_minimizes", false, 0.0, 1e-12};
    for (int rep = 0; rep < 100; ++rep) {
      const auto p = detail::random_population(rng, 3, 12);
      const std::size_t n = 1 + rng.below(p.y.size());
      const auto rep_v = oracle_variance(p.y, p.y_hat, n);
      detail::record(fpc, std::fabs(rep_v.v_of_lambda - rep_v.v_star) / std::max(1.0, rep_v.v_star));
      const double ls = lambda_star(p.y, p.y_hat) + hooks.lambda_star_offset;
      const double at_star = variance_functional(p.y, p.y_hat, n, ls);
      for (int g = 0; g <= 40; ++g) {
        const double lam = -2.0 + 0.125 * g;
        detail::record(mini, std::max(0.0, at_star - variance_functional(p.y, p.y_hat, n, lam)));
      }
    }
    results.push_back(fpc);
    results.push_back(mini);
  }

  {
    PropertyResult r{"affine_invariance", false, 0.0, 1e-10};
    for (int rep = 0; rep < 100; ++rep) {
      const auto p = detail::random_population(rng, 3, 12);
      const std::size_t n = 1 + rng.below(p.y.size());
      double a = rng.uniform(-5.0, 5.0);
      if (std::fabs(a) < 0.1) a = 0.1;
      const double b = rng.uniform(-5.0, 5.0);
      const auto s = affine_recalibrate(a, b, p.y_hat);
      detail::record(r, std::fabs(oracle_variance(p.y, s, n).v_star - oracle_variance(p.y, p.y_hat, n).v_star));
      detail::record(r, std::fabs(lambda_star(p.y, s) - lambda_star(p.y, p.y_hat) / a));
    }
    results.push_back(r);
  }

  {
    PropertyResult orth{"residual_orthogonality", false, 0.0, 1e-10};
    PropertyResult dom{"conditional_mean_dominance", false, 0.0, 1e-10};
    PropertyResult att{"conditional_mean_attains_r2", false, 0.0, 1e-10};
    PropertyResult gain{"max_gain_identity", false, 0.0, 1e-10};
    PropertyResult aff{"affine_truth_zero_gain", false, 0.0, 0.0};
    for (int rep = 0; rep < 50; ++rep) {
      const auto p = detail::random_tied_population(rng, 8 + rng.below(9), 3 + rng.below(4));
      if (!(finite_pop_var(p.y) > 0.0) || !(finite_pop_var(p.y_hat) > 0.0)) continue;
      const std::size_t n = 1 + rng.below(p.y.size() - 1);
      const auto m = conditional_mean_fit(p.y_hat, p.y);
      const auto m_of = detail::apply_m(m, p.y_hat);
      std::vector<double> resid(p.y.size());
      for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = p.y[i] - m_of[i];
      const double r2 = nonparametric_r2(p.y, p.y_hat);
      for (int k = 0; k < 100; ++k) {
        const auto phi = detail::random_lookup(rng, m, p.y_hat);
        detail::record(orth, std::fabs(finite_pop_cov(resid, phi)));
        detail::record(dom, std::max(0.0, squared_correlation(p.y, phi) - r2));
      }
      detail::record(att, std::fabs(squared_correlation(p.y, m_of) - r2));
      const double direct = oracle_variance(p.y, p.y_hat, n).v_star - oracle_variance(p.y, m_of, n).v_star;
      detail::record(gain, std::fabs(max_gain(p.y, p.y_hat, n) - direct));

      const double a = rng.uniform(0.5, 3.0), b = rng.uniform(-1.0, 1.0);
      const auto affine_y = affine_recalibrate(a, b, p.y_hat);
      detail::record(aff, std::fabs(max_gain(affine_y, p.y_hat, n)));
    }
    results.push_back(orth);
    results.push_back(dom);
    results.push_back(att);
    results.push_back(gain);
    results.push_back(aff);
  }

  {
    PropertyResult r{"superpop_closed_form", false, 0.0, 1e-12};
    for (int rep = 0; rep < 200; ++rep) {
      const double var_y = rng.uniform(0.1, 4.0), var_s = rng.uniform(0.1, 4.0);
      const double rho = rng.uniform(-0.99, 0.99);
      const double cov = rho * std::sqrt(var_y * var_s);
      const std::size_t n = 1 + rng.below(200), nu = 1 + rng.below(5000);
      const double lam = superpop_lambda_star(cov, var_s, n, nu);
      const double quad = superpop_variance(var_y, cov, var_s, n, nu, lam);
      const double closed = superpop_oracle_variance(var_y, cov, var_s, n, nu);
      detail::record(r, std::fabs(quad - closed) / std::max(1e-300, closed));
    }
    results.push_back(r);
  }

  for (auto& r : results) r.passed = r.max_deviation <= r.tolerance;
  return results;
}

}  // namespace ppimt
