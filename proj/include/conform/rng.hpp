#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "conform/tensor.hpp"

namespace conform {

/// Seeded generator for every random quantity in the library.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniforms take the top 53 bits; normals use the Box-Muller
/// transform (pairs, cosine branch first) rather than std::normal_distribution,
/// whose algorithm is implementation-defined. A given seed therefore yields
/// the same numbers on every conforming standard library, up to libm rounding
/// in log/sqrt/sin/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform();
  double normal();
  Tensor normal_tensor(Shape shape, double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace conform
