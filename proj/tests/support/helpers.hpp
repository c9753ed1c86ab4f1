#pragma once

#include <catch_amalgamated.hpp>

#include <optional>
#include <vector>

#include "ppimt/core_data.hpp"
#include "ppimt/error.hpp"

namespace ppimt::testing {

template <typename F>
std::optional<Errc> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

#define REQUIRE_ERRC(expr, kind) REQUIRE(::ppimt::testing::error_kind([&] { (void)(expr); }) == (kind))

/// Fully observed task with the given labeled positions.
inline TaskDataset make_task(std::string id, std::vector<double> y_hat, std::vector<double> y,
                             std::vector<std::size_t> labeled = {}) {
  TaskDataset t;
  t.task_id = std::move(id);
  t.y_hat = std::move(y_hat);
  for (double v : y) t.y.emplace_back(v);
  t.labeled.assign(t.y_hat.size(), false);
  for (auto i : labeled) t.labeled[i] = true;
  return t;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace ppimt::testing
