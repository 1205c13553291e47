#include "conform/sampler.hpp"

#include <cmath>
#include <string>

#include "conform/errors.hpp"
#include "conform/rng.hpp"

namespace conform {

void GuidanceConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("guidance.tau", "must be a positive finite number");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("guidance.alpha", "must be finite and >= 0");
  if (total_steps < 1) throw ConfigError("guidance.total_steps", "must be at least 1");
  for (std::size_t i : refine_at) {
    if (i >= total_steps) {
      throw ConfigError("guidance.refine_at",
                        "step " + std::to_string(i) + " outside [0, " + std::to_string(total_steps) + ")");
    }
  }
  if (refine_iters < 1) throw ConfigError("guidance.refine_iters", "must be at least 1");
  if (cutoff_step > total_steps) throw ConfigError("guidance.cutoff_step", "must not exceed total_steps");
}

Tensor latent_update(const Tensor& z, const Tensor& grad, double alpha) {
  if (z.shape() != grad.shape()) {
    throw DimensionError("latent_update shape mismatch: " + to_string(z.shape()) + " vs " +
                         to_string(grad.shape()));
  }
  Tensor out = z;
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= alpha * grad[i];
  if (!out.all_finite()) throw NumericError("latent update produced a non-finite value");
  return out;
}

Tensor ddim_step(const Tensor& z, const Tensor& eps, double alpha_bar, double alpha_bar_prev) {
  if (z.shape() != eps.shape()) {
    throw DimensionError("ddim_step shape mismatch: " + to_string(z.shape()) + " vs " + to_string(eps.shape()));
  }
  const double sqrt_ab = std::sqrt(alpha_bar);
  const double sqrt_one_minus_ab = std::sqrt(1.0 - alpha_bar);
  const double sqrt_ab_prev = std::sqrt(alpha_bar_prev);
  const double sqrt_one_minus_ab_prev = std::sqrt(1.0 - alpha_bar_prev);
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double x0 = (z[i] - sqrt_one_minus_ab * eps[i]) / sqrt_ab;
    out[i] = sqrt_ab_prev * x0 + sqrt_one_minus_ab_prev * eps[i];
  }
  if (!out.all_finite()) throw NumericError("sampler step produced a non-finite value");
  return out;
}

int timestep_for(std::size_t step_index, std::size_t total_steps) {
  return static_cast<int>(total_steps - 1 - step_index);
}

Tensor initial_latent(const ModelShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  return rng.normal_tensor({shape.h, shape.w, shape.c});
}

namespace {

std::string step_context(std::size_t step_index, const std::exception& e) {
  return "step " + std::to_string(step_index) + ": " + e.what();
}

}  // namespace

StepResult denoise_step(const ToyModel& model, const LatentState& state, const TokenGroups& groups,
                        const GuidanceConfig& cfg) {
  if (state.step_index >= cfg.total_steps) throw ContractError("denoise_step past the final step");
  if (model.schedule.steps() != cfg.total_steps) {
    throw ContractError("model schedule has " + std::to_string(model.schedule.steps()) + " steps, config has " +
                        std::to_string(cfg.total_steps));
  }
  const std::size_t i = state.step_index;
  const int t = timestep_for(i, cfg.total_steps);
  const LossConfig loss_cfg = cfg.loss();
  const std::optional<AttentionMaps> no_maps;
  const std::optional<AttentionMaps>& previous = cfg.cross_timestep ? state.prev_maps : no_maps;

  std::size_t iterations = 0;
  if (i < cfg.cutoff_step) iterations = cfg.refine_at.contains(i) ? cfg.refine_iters : 1;

  StepRecord record;
  record.step_index = i;
  record.timestep = t;
  Tensor z = state.z;
  try {
    for (std::size_t k = 0; k < iterations; ++k) {
      Tape tape;
      Var zv = tape.input(z);
      Prediction pred = predict(model, zv, t);
      const auto features = build_features(pred.maps, previous, groups);
      const auto labels = labels_of(features);
      if (!pairable(labels)) break;
      Var loss = contrastive_loss(features, enumerate_pairs(labels), loss_cfg);
      record.losses.push_back(loss.value().item());
      z = latent_update(z, tape.gradient(loss, zv), cfg.alpha);
    }
  } catch (const NumericError& e) {
    throw NumericError(step_context(i, e));
  } catch (const ContractError& e) {
    throw ContractError(step_context(i, e));
  }

  PredictionValue final_pred = predict(model, z, t);
  const double ab = model.schedule.alpha_bar(static_cast<std::size_t>(t));
  const double ab_prev = model.schedule.alpha_bar_prev(static_cast<std::size_t>(t));
  Tensor next_z = ddim_step(z, final_pred.noise, ab, ab_prev);

  record.maps = final_pred.maps;
  record.latent = next_z;
  StepResult result;
  result.next = LatentState{std::move(next_z), i + 1, std::move(final_pred.maps)};
  result.record = std::move(record);
  return result;
}

Trajectory guided_sample(const ToyModel& model, const TokenGroups& groups, const GuidanceConfig& cfg) {
  cfg.validate();
  validate_groups(groups, model.shape.l);
  Trajectory traj;
  traj.initial = initial_latent(model.shape, cfg.seed);
  LatentState state{traj.initial, 0, std::nullopt};
  traj.steps.reserve(cfg.total_steps);
  for (std::size_t i = 0; i < cfg.total_steps; ++i) {
    StepResult r = denoise_step(model, state, groups, cfg);
    traj.steps.push_back(std::move(r.record));
    state = std::move(r.next);
  }
  return traj;
}

Trajectory unguided_sample(const ToyModel& model, const GuidanceConfig& cfg) {
  cfg.validate();
  if (model.schedule.steps() != cfg.total_steps) throw ContractError("model schedule does not match total_steps");
  Trajectory traj;
  traj.initial = initial_latent(model.shape, cfg.seed);
  Tensor z = traj.initial;
  traj.steps.reserve(cfg.total_steps);
  for (std::size_t i = 0; i < cfg.total_steps; ++i) {
    const int t = timestep_for(i, cfg.total_steps);
    PredictionValue pred = predict(model, z, t);
    z = ddim_step(z, pred.noise, model.schedule.alpha_bar(static_cast<std::size_t>(t)),
                  model.schedule.alpha_bar_prev(static_cast<std::size_t>(t)));
    StepRecord rec;
    rec.step_index = i;
    rec.timestep = t;
    rec.maps = std::move(pred.maps);
    rec.latent = z;
    traj.steps.push_back(std::move(rec));
  }
  return traj;
}

LossGradient loss_gradient(const ToyModel& model, const Tensor& z, int timestep,
                           const std::optional<AttentionMaps>& previous, const TokenGroups& groups,
                           const LossConfig& cfg) {
  Tape tape;
  Var zv = tape.input(z);
  Prediction pred = predict(model, zv, timestep);
  Var loss = conform_loss(pred.maps, previous, groups, cfg);
  return {loss.value().item(), tape.gradient(loss, zv)};
}

BacktrackResult backtracking_update(const ToyModel& model, const Tensor& z, int timestep,
                                    const std::optional<AttentionMaps>& previous, const TokenGroups& groups,
                                    const GuidanceConfig& cfg, int max_halvings) {
  const LossConfig loss_cfg = cfg.loss();
  const LossGradient start = loss_gradient(model, z, timestep, previous, groups, loss_cfg);
  BacktrackResult result{z, cfg.alpha, start.loss, start.loss, 0, false};
  double step = cfg.alpha;
  for (int halvings = 0; halvings <= max_halvings; ++halvings, step *= 0.5) {
    Tensor candidate = latent_update(z, start.grad, step);
    const double loss =
        conform_loss(predict(model, candidate, timestep).maps, previous, groups, loss_cfg);
    if (loss < start.loss) return {std::move(candidate), step, start.loss, loss, halvings, true};
    result.halvings = halvings;
  }
  return result;
}

}  // namespace conform
