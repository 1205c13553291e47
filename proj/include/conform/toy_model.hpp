#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "conform/attention.hpp"
#include "conform/tape.hpp"

namespace conform {

/// Extents of the sandbox denoiser: latent h x w x c, attention width d,
/// l tokens of width d_text.
struct ModelShape {
  std::size_t h = 16;
  std::size_t w = 16;
  std::size_t c = 4;
  std::size_t d = 8;
  std::size_t l = 8;
  std::size_t d_text = 16;

  /// Throws ConfigError naming the first zero extent.
  void validate() const;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Cumulative products abar_t of (1 - beta_t), beta linear in t.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.02);

  std::size_t steps() const noexcept { return alpha_bar_.size(); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }
  /// abar_{t-1}; 1 at t = 0 so the last step lands on the clean estimate.
  double alpha_bar_prev(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }

 private:
  std::vector<double> alpha_bar_;
};

/// Small deterministic noise predictor whose only nonlinearity is one
/// cross-attention block: eps = (A V) W_O with A = cross_attention(z).
/// The prediction does not depend on t; the timestep enters only through the
/// sampler's schedule.
struct ToyModel {
  ModelShape shape;
  TextEmbedding embedding;
  ProjectionWeights attention;
  Tensor value;   // [d_text, d]
  Tensor output;  // [d, c]
  NoiseSchedule schedule;

  static ToyModel create(const ModelShape& shape, std::uint64_t seed, std::size_t total_steps);
};

struct Prediction {
  Var noise;  // [h, w, c]
  Var maps;   // [h, w, l]
};

struct PredictionValue {
  Tensor noise;
  AttentionMaps maps;
};

Prediction predict(const ToyModel& model, Var z, int timestep);
PredictionValue predict(const ToyModel& model, const Tensor& z, int timestep);

}  // namespace conform
