#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "conform/attention.hpp"
#include "conform/loss.hpp"
#include "conform/pairing.hpp"
#include "conform/toy_model.hpp"

namespace conform {

/// Guidance hyperparameters. Step indices count denoising steps from 0 (the
/// noisiest) upward.
struct GuidanceConfig {
  double tau = 0.5;
  double alpha = 20.0;
  std::size_t total_steps = 50;
  std::set<std::size_t> refine_at = {0, 10, 20};
  std::size_t refine_iters = 5;
  /// Latent optimization runs only at steps strictly below this index.
  std::size_t cutoff_step = 25;
  std::uint64_t seed = 0;
  /// Include detached previous-step maps as extra features.
  bool cross_timestep = true;

  /// Throws ConfigError naming the first violated field.
  void validate() const;
  LossConfig loss() const { return LossConfig{tau}; }

  friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;
};

struct LatentState {
  Tensor z;  // [h, w, c]
  std::size_t step_index = 0;
  std::optional<AttentionMaps> prev_maps;
};

/// What one denoising step did.
struct StepRecord {
  std::size_t step_index = 0;
  int timestep = 0;
  /// Maps of the final prediction, the one the sampler stepped with.
  AttentionMaps maps;
  /// Loss value at each evaluation, in order; empty when no optimization ran.
  std::vector<double> losses;
  /// Latent after the sampler step.
  Tensor latent;
};

struct StepResult {
  LatentState next;
  StepRecord record;
};

struct Trajectory {
  Tensor initial;
  std::vector<StepRecord> steps;
};

/// z - alpha * grad. Throws DimensionError on shape mismatch.
Tensor latent_update(const Tensor& z, const Tensor& grad, double alpha);

/// Deterministic DDIM update from abar_t to abar_prev with predicted noise `eps`.
Tensor ddim_step(const Tensor& z, const Tensor& eps, double alpha_bar, double alpha_bar_prev);

int timestep_for(std::size_t step_index, std::size_t total_steps);

/// Seeded standard-normal starting latent.
Tensor initial_latent(const ModelShape& shape, std::uint64_t seed);

/// One guided denoising step: predict maps, take a gradient step on the
/// contrastive loss (repeated refine_iters times at refinement steps, skipped
/// from the cutoff on), then a DDIM step using a fresh prediction of the
/// updated latent. When a group has no positive partner (single-token groups
/// before any previous maps exist) the step runs unoptimized.
StepResult denoise_step(const ToyModel& model, const LatentState& state, const TokenGroups& groups,
                        const GuidanceConfig& cfg);

Trajectory guided_sample(const ToyModel& model, const TokenGroups& groups, const GuidanceConfig& cfg);

/// Plain DDIM loop with no guidance code involved.
Trajectory unguided_sample(const ToyModel& model, const GuidanceConfig& cfg);

/// Gradient of the contrastive loss at `z`, with the loss value.
struct LossGradient {
  double loss = 0.0;
  Tensor grad;
};
LossGradient loss_gradient(const ToyModel& model, const Tensor& z, int timestep,
                           const std::optional<AttentionMaps>& previous, const TokenGroups& groups,
                           const LossConfig& cfg);

struct BacktrackResult {
  Tensor z;
  double step = 0.0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  int halvings = 0;
  bool decreased = false;
};

/// Gradient step whose size starts at cfg.alpha and halves until the loss
/// decreases, at most `max_halvings` times.
BacktrackResult backtracking_update(const ToyModel& model, const Tensor& z, int timestep,
                                    const std::optional<AttentionMaps>& previous, const TokenGroups& groups,
                                    const GuidanceConfig& cfg, int max_halvings = 30);

}  // namespace conform
