#include "support/helpers.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ppimt/sampling.hpp"

using namespace ppimt;
using Catch::Approx;
using ppimt::testing::make_task;

TEST_CASE("validate_task_dataset accepts a well-formed task") {
  auto t = make_task("a", {0.1, 0.2, 0.3, 0.4}, {1, 2, 3, 4}, {0, 2});
  const auto v = validate_task_dataset(t);
  CHECK(v.task_id == "a");
  CHECK(v.y_hat == t.y_hat);
  CHECK(v.labeled == t.labeled);
}

TEST_CASE("validate_task_dataset rejects broken invariants") {
  TaskDataset missing{"m", {0.1, 0.2}, {std::nullopt, std::nullopt}, {true, false}};
  REQUIRE_ERRC(validate_task_dataset(missing), Errc::MissingLabel);

  auto nonfinite = make_task("n", {0.1, std::numeric_limits<double>::quiet_NaN()}, {1, 2});
  REQUIRE_ERRC(validate_task_dataset(nonfinite), Errc::NonFiniteValue);

  auto inf_y = make_task("n", {0.1, 0.2}, {1, std::numeric_limits<double>::infinity()});
  REQUIRE_ERRC(validate_task_dataset(inf_y), Errc::NonFiniteValue);

  TaskDataset mismatch{"x", {0.1, 0.2, 0.3}, {1.0, 2.0}, {false, false, false}};
  REQUIRE_ERRC(validate_task_dataset(mismatch), Errc::LengthMismatch);

  auto tiny = make_task("t", {0.1}, {1});
  REQUIRE_ERRC(validate_task_dataset(tiny), Errc::TooSmall);
}

TEST_CASE("validate_study requires unique ids and at least one task") {
  MultiTaskStudy empty;
  REQUIRE(ppimt::testing::error_kind([&] { validate_study(empty); }).has_value());

  MultiTaskStudy dup{{make_task("a", {0, 1}, {0, 1}), make_task("a", {0, 1}, {0, 1})}};
  REQUIRE_ERRC(validate_study(dup), Errc::DuplicateTaskId);

  MultiTaskStudy ok{{make_task("a", {0, 1}, {0, 1}), make_task("b", {0, 1}, {0, 1})}};
  CHECK(validate_study(ok).num_tasks() == 2);
}

TEST_CASE("population_moments on [1,2,3,4]") {
  const std::vector<double> v{1, 2, 3, 4};
  const auto m = population_moments(v);
  CHECK(m.mean == 2.5);
  CHECK(m.var_n == Approx(1.25).epsilon(1e-15));
  CHECK(m.var_sample == Approx(5.0 / 3.0).epsilon(1e-15));
  CHECK(m.n_points == 4);
  CHECK(m.var_n == Approx(ppimt::testing::naive_variance(v, 0)).epsilon(1e-15));
  CHECK(m.var_sample == Approx(ppimt::testing::naive_variance(v, 1)).epsilon(1e-15));
}

TEST_CASE("population_moments degenerate inputs") {
  const auto c = population_moments(std::vector<double>{3.7, 3.7, 3.7});
  CHECK(c.mean == Approx(3.7));
  CHECK(c.var_n == 0.0);
  CHECK(c.var_sample == 0.0);

  const auto z = population_moments(std::vector<double>{0.0, 0.0});
  CHECK(z.mean == 0.0);
  CHECK(z.var_n == 0.0);

  REQUIRE_ERRC(population_moments(std::vector<double>{1.0}), Errc::TooSmall);
  REQUIRE_ERRC(population_moments(std::vector<double>{1.0, std::nan("")}), Errc::NonFiniteValue);
}

TEST_CASE("finite_pop_cov examples") {
  const std::vector<double> u{1, 2, 3, 4}, r{4, 3, 2, 1}, c{5, 5, 5, 5};
  CHECK(finite_pop_cov(u, u) == Approx(1.25));
  CHECK(finite_pop_cov(u, r) == Approx(-1.25));
  CHECK(finite_pop_cov(u, c) == 0.0);
  REQUIRE_ERRC(finite_pop_cov(u, std::vector<double>{1, 2}), Errc::LengthMismatch);
  REQUIRE_ERRC(finite_pop_cov(std::vector<double>{1}, std::vector<double>{1}), Errc::TooSmall);
}

TEST_CASE("moment properties hold on random vectors") {
  Rng rng(StreamKey{1, 0, 0, StreamPurpose::DataGeneration});
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t N = 2 + rng.below(40);
    std::vector<double> u(N), v(N);
    for (std::size_t i = 0; i < N; ++i) {
      u[i] = rng.uniform(-5, 5);
      v[i] = 0.5 * u[i] + rng.normal();
    }
    const auto m = population_moments(u);
    CHECK(m.var_sample * static_cast<double>(N - 1) ==
          Approx(m.var_n * static_cast<double>(N)).epsilon(1e-12).margin(1e-300));
    CHECK(finite_pop_cov(u, v) == finite_pop_cov(v, u));
    CHECK(finite_pop_cov(u, u) == finite_pop_var(u));
    CHECK(finite_pop_var(u) >= 0.0);

    auto shuffled = u;
    rng.shuffle(std::span<double>(shuffled));
    const auto ms = population_moments(shuffled);
    CHECK(ms.mean == Approx(m.mean).epsilon(1e-12).margin(1e-14));
    CHECK(ms.var_n == Approx(m.var_n).epsilon(1e-12));
  }
}

TEST_CASE("sample moments use divisor n-1 and correlation handles constants") {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{1, 1, 1, 1};
  CHECK(sample_var(a) == Approx(5.0 / 3.0));
  CHECK(sample_cov(a, b) == Approx(10.0 / 3.0));
  CHECK(squared_correlation(a, b) == Approx(1.0));
  CHECK(squared_correlation(a, c) == 0.0);
}

TEST_CASE("labeled views") {
  auto t = make_task("a", {0.1, 0.2, 0.3, 0.4}, {1, 2, 3, 4}, {1, 3});
  CHECK(labeled_indices(t) == std::vector<std::size_t>{1, 3});
  CHECK(has_full_ground_truth(t));
  CHECK(population_mean(t) == 2.5);
  const auto idx = labeled_indices(t);
  CHECK(gather(t.y_hat, idx) == std::vector<double>{0.2, 0.4});
  CHECK(gather_labels(t, idx) == std::vector<double>{2, 4});

  t.y[0].reset();
  CHECK_FALSE(has_full_ground_truth(t));
}
