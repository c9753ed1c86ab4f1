#pragma once
// Reproducible random streams keyed by (seed, task, replication, purpose),
// simple random sampling without replacement, and fold splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "ppimt/error.hpp"

namespace ppimt {

enum class StreamPurpose : std::uint32_t {
  LabelDraw = 1,
  FoldSplit = 2,
  KFold = 3,
  GammaJitter = 4,
  DataGeneration = 5,
};

struct StreamKey {
  std::uint64_t master_seed = 0;
  std::uint64_t task_index = 0;
  std::uint64_t replication_index = 0;
  StreamPurpose purpose = StreamPurpose::LabelDraw;
  std::uint64_t stream_index = 0;  // sub-stream within one purpose (e.g. fold A vs B)

  StreamKey with(StreamPurpose p, std::uint64_t sub = 0) const {
    StreamKey k = *this;
    k.purpose = p;
    k.stream_index = sub;
    return k;
  }
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix_in(std::uint64_t h, std::uint64_t v) noexcept {
  std::uint64_t s = h ^ (v + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}

}  // namespace detail

/// xoshiro256** seeded from a hash of the key. Satisfies
/// UniformRandomBitGenerator so it can drive <random> if needed, but the
/// helpers below are used for cross-platform reproducibility.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(const StreamKey& key) {
    std::uint64_t h = 0x5DEECE66DULL;
    h = detail::mix_in(h, key.master_seed);
    h = detail::mix_in(h, key.task_index);
    h = detail::mix_in(h, key.replication_index);
    h = detail::mix_in(h, static_cast<std::uint64_t>(key.purpose));
    h = detail::mix_in(h, key.stream_index);
    for (auto& w : s_) w = detail::splitmix64(h);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform integer in [0, bound) by rejection (Lemire's method).
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    __uint128_t m = static_cast<__uint128_t>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<__uint128_t>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  /// Standard normal by Box-Muller (one draw per call, the pair is discarded).
  double normal() noexcept {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::span<T> v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4]{};
};

/// Mask with exactly `sample_size` true entries, uniform over all subsets of
/// that size (partial Fisher-Yates).
inline std::vector<bool> srs_without_replacement(const StreamKey& key, std::size_t population_size,
                                                 std::size_t sample_size) {
  if (sample_size > population_size)
    detail::fail(Errc::SizeOutOfRange, "sample of " + std::to_string(sample_size) + " from population of " +
                                           std::to_string(population_size));
  std::vector<std::size_t> idx(population_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(key);
  for (std::size_t i = 0; i < sample_size; ++i) std::swap(idx[i], idx[i + rng.below(population_size - i)]);
  std::vector<bool> mask(population_size, false);
  for (std::size_t i = 0; i < sample_size; ++i) mask[idx[i]] = true;
  return mask;
}

/// SRS restricted to a candidate pool; returns a mask over `population_size`.
inline std::vector<bool> srs_from_pool(const StreamKey& key, std::span<const std::size_t> pool,
                                       std::size_t population_size, std::size_t sample_size) {
  const auto inner = srs_without_replacement(key, pool.size(), sample_size);
  std::vector<bool> mask(population_size, false);
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (inner[i]) mask[pool[i]] = true;
  return mask;
}

struct FoldPair {
  std::vector<std::size_t> fold_a;
  std::vector<std::size_t> fold_b;
};

/// Random two-way split; fold A gets the extra element when the count is odd.
/// Both folds are returned in ascending order.
inline FoldPair split_two_folds(const StreamKey& key, std::span<const std::size_t> indices) {
  if (indices.size() < 2) detail::fail(Errc::TooSmall, "cannot split fewer than 2 indices into two folds");
  std::vector<std::size_t> perm(indices.begin(), indices.end());
  Rng rng(key);
  rng.shuffle(std::span<std::size_t>(perm));
  const std::size_t na = (perm.size() + 1) / 2;
  FoldPair out{{perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(na)},
               {perm.begin() + static_cast<std::ptrdiff_t>(na), perm.end()}};
  std::sort(out.fold_a.begin(), out.fold_a.end());
  std::sort(out.fold_b.begin(), out.fold_b.end());
  return out;
}

/// Balanced random fold labels in [0, k): sizes differ by at most one.
inline std::vector<std::size_t> kfold_assignments(const StreamKey& key, std::size_t n_items, std::size_t k) {
  if (k < 2 || k > n_items)
    detail::fail(Errc::BadK, "k=" + std::to_string(k) + " for " + std::to_string(n_items) + " items");
  std::vector<std::size_t> perm(n_items);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(key);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::size_t> fold(n_items);
  for (std::size_t i = 0; i < n_items; ++i) fold[perm[i]] = i % k;
  return fold;
}

}  // namespace ppimt
