#pragma once

// Finite-difference oracle for the latent gradient of the contrastive loss.
//
// Central differences at h = 1e-5 cancel all but the last ~5 digits of the
// loss. In double that leaves ~1e-11 of rounding noise per derivative and in
// long double ~1e-14, while a 1e-6 relative check against a 1e-8 floor allows
// ~1e-14 on near-zero coordinates. The oracle therefore evaluates the loss in
// __float128 with separate direct loops sharing no code with the tape path.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "conform/attention.hpp"
#include "conform/pairing.hpp"
#include "conform/sampler.hpp"
#include "conform/toy_model.hpp"

namespace conform {

/// Contrastive loss of predict(model, z) evaluated in quad precision, rounded to double.
double reference_conform_loss(const ToyModel& model, const Tensor& z, const std::optional<AttentionMaps>& previous,
                              const TokenGroups& groups, double tau);

/// Central differences of the quad-precision loss with step h; perturbation
/// and differencing happen in quad, the result is rounded to double.
Tensor reference_loss_gradient(const ToyModel& model, const Tensor& z, const std::optional<AttentionMaps>& previous,
                               const TokenGroups& groups, double tau, double h);

struct GradcheckPoint {
  std::uint64_t seed = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double autodiff = 0.0;
  double finite_difference = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckPoint> points;
  double tolerance = 1e-6;

  bool passed() const;
  const GradcheckPoint& worst() const;
};

struct GradcheckOptions {
  std::size_t points = 10;
  double h = 1e-5;
  double tolerance = 1e-6;
  /// Applied to every autodiff gradient before comparison. Test hook.
  std::function<void(Tensor&)> perturb_autodiff;
};

/// Compares tape gradients of the loss against the oracle at `options.points`
/// latents drawn from seeds cfg.seed, cfg.seed + 1, .... Each point pairs the
/// latent with detached previous maps from an independent latent, so both
/// same-step and cross-step pairs are exercised.
GradcheckReport run_gradcheck(const ToyModel& model, const TokenGroups& groups, const GuidanceConfig& cfg,
                              const GradcheckOptions& options = {});

}  // namespace conform
