#include "support/helpers.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "ppimt/estimators.hpp"
#include "ppimt/experiments.hpp"

using namespace ppimt;
using Catch::Approx;
using ppimt::testing::make_task;

namespace {

EstimatorOptions opts(bool power_tune = false, bool clip = true) { return {power_tune, clip, 5}; }

StreamKey key(std::uint64_t b) { return {31, 0, b, StreamPurpose::LabelDraw}; }

MultiTaskStudy synthetic(std::size_t tasks, std::size_t items, double p_min, double p_max, std::uint64_t seed,
                         double noise = 0.1) {
  SyntheticSpec spec;
  spec.n_tasks = tasks;
  spec.items_per_task = items;
  spec.p_min = p_min;
  spec.p_max = p_max;
  spec.noise_sd = noise;
  spec.seed = seed;
  return generate_synthetic_study(spec).study;
}

void draw_all(MultiTaskStudy& s, std::size_t n, std::uint64_t b) {
  for (std::size_t t = 0; t < s.num_tasks(); ++t)
    s.tasks[t].labeled = srs_without_replacement(StreamKey{32, t, b, StreamPurpose::LabelDraw}, s.tasks[t].size(), n);
}

}  // namespace

TEST_CASE("method names round-trip") {
  for (auto m : kAllMethods) CHECK(parse_method(method_name(m)) == m);
  CHECK(parse_method("ppi_pp") == Method::PpiPlusPlus);
  CHECK(parse_method("ppi++") == Method::PpiPlusPlus);
  CHECK_FALSE(parse_method("bogus").has_value());
  CHECK(min_labels(Method::Reppi2) == 4);
  CHECK(min_labels(Method::Areppi) == 4);
  CHECK(min_labels(Method::Greppi) == 2);
}

TEST_CASE("rectified_estimate examples") {
  const std::vector<double> y{1, 3}, s{0, 2};
  CHECK(rectified_estimate(y, s, 1.0, 0.0) == 2.0);
  CHECK(rectified_estimate(y, s, 1.0, 0.37) == 2.0);
  CHECK(rectified_estimate(y, s, 1.0, 1.0) == 2.0);
  CHECK(rectified_estimate(y, s, 2.0, 0.5) == 2.5);
  REQUIRE_ERRC(rectified_estimate(std::vector<double>{}, std::vector<double>{}, 1.0, 1.0), Errc::EmptyLabeledSet);
}

TEST_CASE("plug_in_lambda examples") {
  const std::vector<double> y{0.1, 0.5, 0.2, 0.9};
  CHECK(plug_in_lambda(y, y, true) == Approx(1.0));
  CHECK(plug_in_lambda(y, affine_recalibrate(2, 0, y), true) == Approx(0.5));
  CHECK(plug_in_lambda(y, affine_recalibrate(-1, 0, y), true) == 0.0);
  CHECK(plug_in_lambda(y, affine_recalibrate(-1, 0, y), false) == Approx(-1.0));
  CHECK(plug_in_lambda(y, affine_recalibrate(0.5, 0, y), true) == 1.0);
  CHECK(plug_in_lambda(y, std::vector<double>(4, 0.3), true) == 0.0);
  REQUIRE_ERRC(plug_in_lambda(std::vector<double>{1}, std::vector<double>{1}, true), Errc::TooSmall);
}

TEST_CASE("classical estimate") {
  auto t = make_task("a", {0, 0, 0, 0}, {0.2, 9, 0.4, 9}, {0, 2});
  const auto r = classical_estimate(t);
  CHECK(r.theta_hat == Approx(0.3));
  CHECK(r.lambda_used == 0.0);
  CHECK(r.residuals == std::vector<double>{0.2, 0.4});
  CHECK(r.n_labeled == 2);
  CHECK_FALSE(r.s_values_full.has_value());

  auto c = make_task("c", {0, 0, 0}, {5, 5, 5}, {0, 1});
  CHECK(classical_estimate(c).theta_hat == 5.0);

  auto one = make_task("o", {0, 0, 0}, {1, 2, 3}, {1});
  REQUIRE_ERRC(classical_estimate(one), Errc::TooFewLabels);
}

TEST_CASE("ppi estimate") {
  auto t = make_task("a", {0, 0, 2, 2}, {1, 7, 3, 7}, {0, 2});
  const auto r = ppi_estimate(t);
  CHECK(r.theta_hat == 2.0);
  CHECK(r.lambda_used == 1.0);
  CHECK(r.residuals == std::vector<double>{1.0, 1.0});

  auto perfect = make_task("p", {0.1, 0.5, 0.3, 0.8}, {0.1, 0.5, 0.3, 0.8}, {1, 3});
  CHECK(ppi_estimate(perfect).theta_hat == Approx(mean_of(perfect.y_hat)));

  auto zero = make_task("z", {0, 0, 0, 0}, {1, 2, 3, 4}, {0, 3});
  CHECK(ppi_estimate(zero).theta_hat == 2.5);
}

TEST_CASE("ppi++ estimate") {
  auto perfect = make_task("p", {0.1, 0.5, 0.3, 0.8}, {0.1, 0.5, 0.3, 0.8}, {0, 1, 3});
  const auto rp = ppipp_estimate(perfect, true);
  CHECK(rp.lambda_used == Approx(1.0));
  CHECK(rp.theta_hat == Approx(mean_of(perfect.y_hat)));
  CHECK(rp.power_tuned);

  auto flat = make_task("f", {0.4, 0.4, 0.4, 0.4}, {1, 2, 3, 4}, {0, 1});
  const auto rf = ppipp_estimate(flat, true);
  CHECK(rf.lambda_used == 0.0);
  CHECK(rf.theta_hat == classical_estimate(flat).theta_hat);
  CHECK(rf.residuals == std::vector<double>{1, 2});

  auto twice = make_task("t", {0.2, 0.6, 1.0, 0.4}, {0.1, 0.3, 0.5, 0.2}, {0, 1, 2});
  CHECK(ppipp_estimate(twice, true).lambda_used == Approx(0.5));
}

TEST_CASE("ppi++ is invariant to affine rescaling of the surrogate") {
  Rng rng(StreamKey{33, 0, 0, StreamPurpose::DataGeneration});
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t N = 10 + rng.below(40);
    std::vector<double> yh(N), y(N);
    for (std::size_t i = 0; i < N; ++i) {
      yh[i] = rng.uniform01();
      y[i] = yh[i] + 0.3 * rng.normal();
    }
    auto t = make_task("a", yh, y);
    t.labeled = srs_without_replacement(key(static_cast<std::uint64_t>(rep)), N, 2 + rng.below(N - 1));
    const double a = rng.uniform(0.2, 5.0), b = rng.uniform(-2, 2);
    auto t2 = t;
    t2.y_hat = affine_recalibrate(a, b, yh);
    const auto r1 = ppipp_estimate(t, false), r2 = ppipp_estimate(t2, false);
    CHECK(r2.theta_hat == Approx(r1.theta_hat).margin(1e-10));
    CHECK(r2.lambda_used * a == Approx(r1.lambda_used).margin(1e-10));
  }
}

TEST_CASE("greppi with identity recalibration tracks ppi") {
  auto target = make_task("t", {0.2, 0.3, 0.5, 0.7, 0.8}, {0.25, 0.3, 0.45, 0.75, 0.8}, {1, 2, 4});
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
  auto aux = make_task("aux", grid, grid, ppimt::testing::iota_indices(grid.size()));
  const MultiTaskStudy study{{target, aux}};
  const auto g = greppi_estimate(target, study, false, true);
  const auto p = ppi_estimate(target);
  CHECK(g.theta_hat == Approx(p.theta_hat).margin(1e-12));
  CHECK(g.lambda_used == 1.0);
  const auto gt = greppi_estimate(target, study, true, true);
  CHECK(gt.theta_hat == Approx(ppipp_estimate(target, true).theta_hat).margin(1e-12));
}

TEST_CASE("greppi with a flat global fit falls back to classical when tuned") {
  auto target = make_task("t", {0.2, 0.3, 0.5, 0.7}, {1, 2, 3, 4}, {0, 1, 3});
  auto aux = make_task("aux", {0.1, 0.5, 0.9}, {0.6, 0.6, 0.6}, {0, 1, 2});
  const MultiTaskStudy study{{target, aux}};
  const auto r = greppi_estimate(target, study, true, true);
  CHECK(r.lambda_used == 0.0);
  CHECK(r.theta_hat == classical_estimate(target).theta_hat);

  const MultiTaskStudy alone{{target}};
  REQUIRE_ERRC(greppi_estimate(target, alone, false, true), Errc::NoAuxiliaryLabels);
}

TEST_CASE("greppi beats ppi when the outcome is a nonlinear function of the surrogate") {
  MultiTaskStudy study;
  for (std::size_t t = 0; t < 2; ++t) {
    Rng rng(StreamKey{34, t, 0, StreamPurpose::DataGeneration});
    std::vector<double> yh(150), y(150);
    for (std::size_t i = 0; i < 150; ++i) {
      yh[i] = rng.uniform01();
      y[i] = yh[i] * yh[i];
    }
    study.tasks.push_back(make_task("sq" + std::to_string(t), yh, y));
  }
  std::vector<double> g, p;
  for (std::uint64_t b = 0; b < 2000; ++b) {
    draw_all(study, 20, b);
    g.push_back(greppi_estimate(study.tasks[0], study, false, true).theta_hat);
    p.push_back(ppi_estimate(study.tasks[0]).theta_hat);
  }
  CHECK(ppimt::testing::naive_variance(g, 1) < ppimt::testing::naive_variance(p, 1));
}

TEST_CASE("two-fold reppi") {
  SECTION("rich folds with Y = Y_hat reproduce ppi") {
    std::vector<double> x;
    for (int i = 0; i < 40; ++i) x.push_back(i / 39.0);
    auto t = make_task("a", x, x);
    for (std::size_t i = 0; i < 40; i += 2) t.labeled[i] = true;
    const auto r = reppi_two_fold_estimate(t, key(0), false, true);
    const auto folds = split_two_folds(key(0).with(StreamPurpose::FoldSplit), labeled_indices(t));
    // each fold's fit is the identity inside the other fold's score range and clamps outside it
    for (const auto* f : {&folds.fold_a, &folds.fold_b}) {
      const auto& other = f == &folds.fold_a ? folds.fold_b : folds.fold_a;
      double lo = 1.0, hi = 0.0;
      for (auto i : other) lo = std::min(lo, x[i]), hi = std::max(hi, x[i]);
      for (auto i : *f) CHECK((*r.s_values_full)[i] == Approx(std::clamp(x[i], lo, hi)).margin(1e-12));
    }
    const auto rt = reppi_two_fold_estimate(t, key(0), true, true);
    CHECK(rt.lambda_used == Approx(1.0));
  }
  SECTION("a decreasing pair is pooled to a constant fit") {
    auto t = make_task("a", {0.1, 0.2, 0.3, 0.4, 0.5}, {0.9, 0.1, 0.8, 0.2, 0.5}, {0, 1, 2, 3});
    const auto r = reppi_two_fold_estimate(t, key(3), false, true);
    const auto folds = split_two_folds(key(3).with(StreamPurpose::FoldSplit), labeled_indices(t));
    const auto& w = *r.s_values_full;
    // x increases with the index, so a fold is a violator when its labels decrease
    auto pooled_mean = [&](const std::vector<std::size_t>& f) {
      const auto ys = gather_labels(t, f);
      return ys[0] > ys[1] ? (ys[0] + ys[1]) / 2 : std::nan("");
    };
    int checked = 0;
    for (const auto* f : {&folds.fold_a, &folds.fold_b}) {
      const double m = pooled_mean(*f);
      if (std::isnan(m)) continue;
      const auto& other = f == &folds.fold_a ? folds.fold_b : folds.fold_a;
      for (auto i : other) CHECK(w[i] == Approx(m));
      ++checked;
    }
    CHECK(checked >= 1);
  }
  SECTION("minimum size and errors") {
    auto t = make_task("a", {0.1, 0.2, 0.3, 0.4, 0.5}, {1, 2, 3, 4, 5}, {0, 1, 2});
    REQUIRE_ERRC(reppi_two_fold_estimate(t, key(0), false, true), Errc::TooFewLabels);
    t.labeled[4] = true;
    const auto r = reppi_two_fold_estimate(t, key(0), false, true);
    CHECK(r.residuals.size() == 4);
  }
}

TEST_CASE("areppi gamma fallback on degenerate mixtures") {
  const std::vector<double> c(5, 0.3), y{1, 2, 3, 4, 5};
  CHECK(detail::best_mixture_weight(c, c, y) == 0.0);
  const std::vector<double> local{1, 2, 3, 4, 5};
  CHECK(detail::best_mixture_weight(local, c, std::vector<double>(5, 2.0)) == 0.0);
  CHECK(detail::best_mixture_weight(local, std::vector<double>{2, 5, 1, 4, 3}, y) == 1.0);
}

TEST_CASE("areppi trusts the global fit when auxiliary tasks match the target") {
  auto study = synthetic(6, 300, 2.0, 2.0, 41);
  double gamma_sum = 0.0;
  int count = 0;
  for (std::uint64_t b = 0; b < 60; ++b) {
    draw_all(study, 120, b);
    const auto r = areppi_estimate(study.tasks[0], study, opts(), key(b));
    gamma_sum += (*r.gammas)[0] + (*r.gammas)[1];
    count += 2;
    CHECK(r.lambda_used == 1.0);
  }
  CHECK(gamma_sum / count < 0.35);
}

TEST_CASE("areppi leans on the local fit when auxiliary tasks are unrelated") {
  auto study = synthetic(6, 300, 2.0, 2.0, 42);
  for (std::size_t t = 1; t < study.num_tasks(); ++t) {
    Rng rng(StreamKey{43, t, 0, StreamPurpose::DataGeneration});
    for (auto& v : study.tasks[t].y) v = rng.normal();
  }
  double gamma_sum = 0.0;
  int count = 0;
  for (std::uint64_t b = 0; b < 60; ++b) {
    draw_all(study, 60, b);
    const auto r = areppi_estimate(study.tasks[0], study, opts(), key(b));
    gamma_sum += (*r.gammas)[0] + (*r.gammas)[1];
    count += 2;
  }
  CHECK(gamma_sum / count > 0.65);
}

TEST_CASE("areppi small folds and errors") {
  auto study = synthetic(3, 30, 1.0, 2.0, 44);
  draw_all(study, 4, 0);
  const auto r = areppi_estimate(study.tasks[0], study, opts(), key(0));
  CHECK(r.residuals.size() == 4);
  CHECK(r.gammas.has_value());
  draw_all(study, 3, 0);
  REQUIRE_ERRC(areppi_estimate(study.tasks[0], study, opts(), key(0)), Errc::TooFewLabels);
  MultiTaskStudy alone{{study.tasks[0]}};
  alone.tasks[0].labeled = srs_without_replacement(key(1), 30, 8);
  REQUIRE_ERRC(areppi_estimate(alone.tasks[0], alone, opts(), key(0)), Errc::NoAuxiliaryLabels);
}

TEST_CASE("every method is exact at a census") {
  auto study = synthetic(3, 25, 0.5, 4.0, 45);
  for (auto& t : study.tasks) t.labeled.assign(t.size(), true);
  const double theta = population_mean(study.tasks[1]);
  for (auto m : kAllMethods)
    for (bool pt : {false, true}) {
      const auto r = estimate(m, study.tasks[1], study, opts(pt), key(0));
      INFO(method_name(m) << " pt=" << pt);
      CHECK(r.theta_hat == theta);
    }
}

TEST_CASE("clipped lambdas stay in [0,1] and residuals match the labeled set") {
  auto study = synthetic(4, 60, 0.1, 10.0, 46, 0.3);
  for (std::uint64_t b = 0; b < 30; ++b) {
    draw_all(study, 8, b);
    for (auto m : kAllMethods) {
      const auto r = estimate(m, study.tasks[2], study, opts(true, true), key(b));
      CHECK(r.lambda_used >= 0.0);
      CHECK(r.lambda_used <= 1.0);
      CHECK(r.residuals.size() == r.n_labeled);
      CHECK(r.n_labeled == 8);
      if (m != Method::Classical) CHECK(r.s_values_full->size() == 60);
    }
  }
}

TEST_CASE("fixed-lambda estimators are unbiased over label redraws") {
  auto study = synthetic(3, 80, 0.5, 5.0, 47);
  // auxiliary labels stay fixed so the global recalibrator does not depend on the target draw
  draw_all(study, 20, 999);
  const double theta = population_mean(study.tasks[0]);
  constexpr std::size_t B = 10000;
  for (auto m : {Method::Classical, Method::Ppi, Method::Greppi}) {
    std::vector<double> est;
    for (std::uint64_t b = 0; b < B; ++b) {
      study.tasks[0].labeled = srs_without_replacement(key(b), 80, 10);
      est.push_back(estimate(m, study.tasks[0], study, opts(), key(b)).theta_hat);
    }
    const double mean = mean_of(est);
    const double se = std::sqrt(ppimt::testing::naive_variance(est, 1) / B);
    INFO(method_name(m) << " mean " << mean << " theta " << theta << " se " << se);
    CHECK(std::fabs(mean - theta) < 4.0 * se);
  }
}

TEST_CASE("two-fold reppi at n = 4 is centred on the population mean") {
  auto study = synthetic(1, 40, 3.0, 3.0, 48);
  const double theta = population_mean(study.tasks[0]);
  std::vector<double> est;
  for (std::uint64_t b = 0; b < 10000; ++b) {
    study.tasks[0].labeled = srs_without_replacement(key(b), 40, 4);
    est.push_back(reppi_two_fold_estimate(study.tasks[0], key(b), false, true).theta_hat);
  }
  const double se = std::sqrt(ppimt::testing::naive_variance(est, 1) / 10000.0);
  CHECK(std::fabs(mean_of(est) - theta) < 4.0 * se);
}

TEST_CASE("task order does not change pooled-fit estimates") {
  auto study = synthetic(5, 50, 0.5, 6.0, 49);
  draw_all(study, 12, 3);
  auto reversed = study;
  std::reverse(reversed.tasks.begin(), reversed.tasks.end());
  for (auto m : {Method::Greppi, Method::Areppi})
    for (bool pt : {false, true}) {
      const auto a = estimate(m, study.tasks[1], study, opts(pt), key(5));
      const auto b = estimate(m, reversed.tasks[3], reversed, opts(pt), key(5));
      CHECK(a.theta_hat == b.theta_hat);
      CHECK(a.lambda_used == b.lambda_used);
    }
}
