#include "conform/rng.hpp"

#include <cmath>
#include <numbers>

namespace conform {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

Tensor Rng::normal_tensor(Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * normal();
  return t;
}

}  // namespace conform
