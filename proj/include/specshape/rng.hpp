#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

#include "specshape/matrix.hpp"

namespace specshape {

/// xoshiro256** with a Box-Muller normal sampler. Distributions are computed
/// here rather than through <random> so streams are identical across
/// standard-library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next(); }

  std::uint64_t next();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  std::size_t below(std::size_t n);

  void fill_normal(std::span<double> out, double stddev = 1.0);
  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Independent stream keyed by (seed, purpose tag, index, sub-index). Streams
/// for different keys never share state, so drawing from one (for example
/// probe batches) cannot perturb another (training batches).
Rng stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0, std::uint64_t sub = 0);

}  // namespace specshape
