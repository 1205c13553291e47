#include "conform/toy_model.hpp"

#include <cmath>

#include "conform/errors.hpp"
#include "conform/rng.hpp"

namespace conform {

namespace {

// Weight scales: queries and keys are O(1) so the attention softmax is neither
// uniform nor saturated for standard-normal latents, and predicted noise has
// roughly unit variance.
constexpr double kQueryScale = 1.0;
constexpr double kKeyScale = 1.0;
constexpr double kValueScale = 1.0;
constexpr double kOutputScale = 1.0;

}  // namespace

void ModelShape::validate() const {
  const std::pair<const char*, std::size_t> extents[] = {{"model.h", h}, {"model.w", w}, {"model.c", c},
                                                         {"model.d", d}, {"model.l", l}, {"model.d_text", d_text}};
  for (const auto& [name, v] : extents)
    if (v == 0) throw ConfigError(name, "extent must be positive");
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) throw ConfigError("total_steps", "must be at least 1");
  NoiseSchedule s;
  s.alpha_bar_.resize(steps);
  double product = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    product *= 1.0 - beta;
    s.alpha_bar_[t] = product;
  }
  return s;
}

ToyModel ToyModel::create(const ModelShape& shape, std::uint64_t seed, std::size_t total_steps) {
  shape.validate();
  Rng rng(seed);
  ToyModel m;
  m.shape = shape;
  m.embedding = TextEmbedding::random(shape.l, shape.d_text, rng);
  m.attention.query = rng.normal_tensor({shape.c, shape.d}, kQueryScale / std::sqrt(double(shape.c)));
  m.attention.key = rng.normal_tensor({shape.d_text, shape.d}, kKeyScale);
  m.value = rng.normal_tensor({shape.d_text, shape.d}, kValueScale);
  m.output = rng.normal_tensor({shape.d, shape.c}, kOutputScale / std::sqrt(double(shape.d)));
  m.schedule = NoiseSchedule::linear(total_steps);
  return m;
}

Prediction predict(const ToyModel& model, Var z, int timestep) {
  (void)timestep;
  const ModelShape& s = model.shape;
  if (z.shape() != Shape{s.h, s.w, s.c}) {
    throw DimensionError("latent " + to_string(z.shape()) + " does not match model " +
                         to_string(Shape{s.h, s.w, s.c}));
  }
  Tape& tape = z.tape();
  Var maps = cross_attention(z, model.embedding, model.attention);
  Var weights = reshape(maps, {s.h * s.w, s.l});
  Var values = tape.constant(matmul(model.embedding.tokens, model.value));
  Var mixed = matmul(weights, values);
  Var noise = reshape(matmul(mixed, tape.constant(model.output)), {s.h, s.w, s.c});
  return {noise, maps};
}

PredictionValue predict(const ToyModel& model, const Tensor& z, int timestep) {
  Tape tape;
  Prediction p = predict(model, tape.constant(z), timestep);
  return {p.noise.value(), to_attention_maps(p.maps.value(), timestep)};
}

}  // namespace conform
