#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string_view>

namespace dssl {

/// xoshiro256** generator seeded through splitmix64.
///
/// Components never share a generator. Each one derives its own sub-stream from
/// the run seed, a stream name and an optional integer path (epoch, batch, ...),
/// so any piece of a run can be reproduced in isolation:
///
///   auto rng = Rng::stream(seed, "augment", {epoch, batch});
///
/// Distributions are implemented here rather than through <random> so that
/// draws are identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  static Rng stream(std::uint64_t seed, std::string_view name,
                    std::initializer_list<std::uint64_t> path = {});

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on the open interval (lo, hi).
  double uniform_open(double lo, double hi);
  /// Standard normal (Box-Muller, second variate cached).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  /// Fisher-Yates shuffle.
  void shuffle(std::span<std::size_t> v);

 private:
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace dssl
