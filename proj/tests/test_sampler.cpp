#include <cmath>
#include <vector>

#include "conform/errors.hpp"
#include "conform/rng.hpp"
#include "conform/sampler.hpp"
#include "conform/toy_model.hpp"
#include "test_support.hpp"

using namespace conform;

namespace {

const TokenGroups kGroups{{3, {2}}, {7, {6}}};

ModelShape small_shape() {
  ModelShape s;
  s.h = 6;
  s.w = 6;
  return s;
}

void check_same(const Trajectory& a, const Trajectory& b) {
  REQUIRE(a.steps.size() == b.steps.size());
  CHECK(a.initial == b.initial);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].latent == b.steps[i].latent);
    CHECK(a.steps[i].maps.maps == b.steps[i].maps.maps);
    CHECK(a.steps[i].timestep == b.steps[i].timestep);
  }
}

}  // namespace

TEST_CASE("latent update examples") {
  const Tensor z = Tensor::vector({1, 2});
  CHECK(latent_update(z, Tensor::vector({0.5, -0.5}), 20.0) == Tensor::vector({-9, 12}));
  CHECK(latent_update(z, Tensor::vector({0, 0}), 20.0) == z);
  CHECK(latent_update(z, Tensor::vector({3.5, -7}), 0.0) == z);
  CHECK_THROWS_AS(latent_update(z, Tensor::vector({1, 2, 3}), 1.0), DimensionError);
}

TEST_CASE("noise schedule") {
  const NoiseSchedule s = NoiseSchedule::linear(50);
  CHECK(s.steps() == 50);
  CHECK(std::abs(s.alpha_bar(0) - (1 - 1e-4)) < 1e-15);
  for (std::size_t t = 1; t < 50; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK(s.alpha_bar_prev(0) == 1.0);
  CHECK(s.alpha_bar_prev(10) == s.alpha_bar(9));
  CHECK_THROWS_AS(NoiseSchedule::linear(0), ConfigError);
}

TEST_CASE("ddim step moves an exact decomposition to the previous noise level") {
  Rng rng(1);
  const Tensor x0 = rng.normal_tensor({3, 3, 2});
  const Tensor eps = rng.normal_tensor({3, 3, 2});
  const double ab = 0.6, ab_prev = 0.8;
  Tensor z(x0.shape());
  Tensor expected(x0.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = std::sqrt(ab) * x0[i] + std::sqrt(1 - ab) * eps[i];
    expected[i] = std::sqrt(ab_prev) * x0[i] + std::sqrt(1 - ab_prev) * eps[i];
  }
  CHECK(max_abs_diff(ddim_step(z, eps, ab, ab_prev), expected) < 1e-14);
  CHECK(max_abs_diff(ddim_step(z, eps, ab, 1.0), x0) < 1e-14);
}

TEST_CASE("step index maps to descending timesteps") {
  CHECK(timestep_for(0, 50) == 49);
  CHECK(timestep_for(49, 50) == 0);
}

TEST_CASE("prediction shapes, zero output weights and determinism") {
  const ModelShape shape;
  const ToyModel model = ToyModel::create(shape, 3, 50);
  const Tensor z = initial_latent(shape, 4);
  CHECK(z.shape() == Shape{16, 16, 4});
  const PredictionValue p = predict(model, z, 20);
  CHECK(p.noise.shape() == Shape{16, 16, 4});
  CHECK(p.maps.maps.shape() == Shape{16, 16, 8});

  ToyModel silent = model;
  silent.output = Tensor::filled(model.output.shape(), 0.0);
  CHECK(predict(silent, z, 20).noise == Tensor::filled({16, 16, 4}, 0.0));
  CHECK(predict(silent, initial_latent(shape, 99), 3).noise == Tensor::filled({16, 16, 4}, 0.0));

  const ToyModel again = ToyModel::create(shape, 3, 50);
  CHECK(again.attention.query == model.attention.query);
  CHECK(again.output == model.output);
  const PredictionValue q = predict(again, initial_latent(shape, 4), 20);
  CHECK(q.noise == p.noise);
  CHECK(q.maps.maps == p.maps.maps);
  CHECK_FALSE(ToyModel::create(shape, 5, 50).attention.query == model.attention.query);
}

TEST_CASE("defaults") {
  const GuidanceConfig cfg;
  CHECK(cfg.tau == 0.5);
  CHECK(cfg.alpha == 20.0);
  CHECK(cfg.refine_at == std::set<std::size_t>{0, 10, 20});
  CHECK(cfg.cutoff_step == 25);
  CHECK(cfg.total_steps == 50);
  CHECK(cfg.refine_iters == 5);
}

TEST_CASE("config validation names fields") {
  GuidanceConfig cfg;
  cfg.tau = 0.0;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "guidance.tau");
  }
  cfg = {};
  cfg.total_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("one total step runs one denoising step") {
  GuidanceConfig cfg;
  cfg.total_steps = 1;
  cfg.refine_at = {0};
  cfg.cutoff_step = 1;
  const ToyModel model = ToyModel::create(small_shape(), 1, 1);
  CHECK(guided_sample(model, kGroups, cfg).steps.size() == 1);
  CHECK(unguided_sample(model, cfg).steps.size() == 1);
}

TEST_CASE("same seed and config give identical trajectories") {
  GuidanceConfig cfg;
  cfg.seed = 12;
  const ToyModel model = ToyModel::create(small_shape(), 2, cfg.total_steps);
  check_same(guided_sample(model, kGroups, cfg), guided_sample(model, kGroups, cfg));
}

TEST_CASE("zero step size without refinement reproduces the unguided loop") {
  GuidanceConfig cfg;
  cfg.alpha = 0.0;
  cfg.refine_at = {};
  cfg.seed = 5;
  const ToyModel model = ToyModel::create(small_shape(), 4, cfg.total_steps);
  check_same(guided_sample(model, kGroups, cfg), unguided_sample(model, cfg));
}

TEST_CASE("no optimization from the cutoff on") {
  GuidanceConfig cfg;
  const ToyModel model = ToyModel::create(small_shape(), 6, cfg.total_steps);
  const Tensor z = initial_latent(model.shape, 8);
  const AttentionMaps prev = predict(model, z, 24).maps;
  for (std::size_t i : {25u, 26u, 40u, 49u}) {
    const StepResult r = denoise_step(model, LatentState{z, i, prev}, kGroups, cfg);
    CHECK(r.record.losses.empty());
    const int t = timestep_for(i, cfg.total_steps);
    const Tensor expected = ddim_step(z, predict(model, z, t).noise, model.schedule.alpha_bar(t),
                                      model.schedule.alpha_bar_prev(t));
    CHECK(r.record.latent == expected);
  }
}

TEST_CASE("refinement steps evaluate the loss refine_iters times") {
  GuidanceConfig cfg;
  cfg.refine_iters = 3;
  const ToyModel model = ToyModel::create(small_shape(), 6, cfg.total_steps);
  const Trajectory traj = guided_sample(model, kGroups, cfg);
  for (const StepRecord& s : traj.steps) {
    std::size_t expected = s.step_index >= 25 ? 0 : cfg.refine_at.contains(s.step_index) ? 3 : 1;
    CHECK(s.losses.size() == expected);
  }
}

TEST_CASE("single-token groups skip optimization until previous maps exist") {
  GuidanceConfig cfg;
  const ToyModel model = ToyModel::create(small_shape(), 6, cfg.total_steps);
  const Trajectory traj = guided_sample(model, {{2, {}}, {5, {}}}, cfg);
  CHECK(traj.steps[0].losses.empty());
  CHECK(traj.steps[1].losses.size() == 1);
  CHECK(traj.steps[10].losses.size() == 5);
}

TEST_CASE("next state carries the maps the step used") {
  GuidanceConfig cfg;
  const ToyModel model = ToyModel::create(small_shape(), 6, cfg.total_steps);
  const StepResult r = denoise_step(model, LatentState{initial_latent(model.shape, 1), 0, std::nullopt}, kGroups, cfg);
  REQUIRE(r.next.prev_maps.has_value());
  CHECK(r.next.prev_maps->maps == r.record.maps.maps);
  CHECK(r.next.step_index == 1);
  CHECK(r.next.z == r.record.latent);
}

TEST_CASE("a halving line search along the gradient lowers the loss") {
  GuidanceConfig cfg;
  const ToyModel model = ToyModel::create(small_shape(), 6, cfg.total_steps);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Tensor z = initial_latent(model.shape, seed);
    const AttentionMaps prev = predict(model, initial_latent(model.shape, seed + 100), 30).maps;
    const BacktrackResult r = backtracking_update(model, z, 29, prev, kGroups, cfg);
    CHECK(r.decreased);
    CHECK(r.loss_after < r.loss_before);
    CHECK(r.step <= cfg.alpha);
  }
}

TEST_CASE("loss falls across the guided phase on the default sandbox") {
  GuidanceConfig cfg;
  const ToyModel model = ToyModel::create(ModelShape{}, 7, cfg.total_steps);
  const Trajectory traj = guided_sample(model, kGroups, cfg);
  CHECK(traj.steps[20].losses.back() < traj.steps[0].losses.front());
}
