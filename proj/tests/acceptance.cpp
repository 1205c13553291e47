// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "conform/cli/commands.hpp"
#include "conform/cli/config.hpp"
#include "conform/loss.hpp"
#include "conform/metrics.hpp"
#include "conform/pairing.hpp"
#include "conform/sampler.hpp"
#include "oracles.hpp"

using namespace conform;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const TokenGroups kGroups{{3, {2}}, {7, {6}}};
constexpr std::size_t kSeeds = 16;

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  std::printf("[%s] %2d %-28s %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "conform-acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

cli::RunConfig default_run(const fs::path& out) {
  cli::RunConfig cfg;
  cfg.groups = kGroups;
  cfg.output_dir = out.string();
  return cfg;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome gradient_oracle(const fs::path& dir) {
  const fs::path config = dir / "gradcheck.json";
  cli::save_config(default_run(dir / "gradcheck-out"), config);
  std::ostringstream out, err;
  const auto start = Clock::now();
  const int code = cli::cmd_gradcheck(config, {}, GradcheckOptions{}, out, err);
  const double secs = seconds_since(start);
  std::string last = out.str();
  last = last.substr(last.rfind("max relative error"));
  last.pop_back();
  return {code == 0 && secs < 60.0, last + fmt(", %.1f s", secs)};
}

Outcome brute_force() {
  std::mt19937_64 gen(2024);
  Rng rng(2024);
  double worst = 0.0;
  int evaluated = 0;
  for (int trial = 0; evaluated < 100; ++trial) {
    const bool with_previous = trial % 2 == 0;
    const std::size_t max_tokens = with_previous ? 5 : 10;
    const std::size_t l = 12;
    std::vector<std::size_t> pool{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    std::shuffle(pool.begin(), pool.end(), gen);
    std::size_t used = 0;
    TokenGroups groups;
    const std::size_t n_groups = 2 + gen() % 2;
    for (std::size_t g = 0; g < n_groups && used + 1 <= max_tokens; ++g) {
      TokenGroup group{pool[used++], {}};
      // Groups need a partner feature when no previous maps are paired in.
      const std::size_t min_attrs = with_previous ? 0 : 1;
      const std::size_t attrs = min_attrs + gen() % 2;
      for (std::size_t k = 0; k < attrs && used < max_tokens; ++k) group.attributes.push_back(pool[used++]);
      groups.push_back(group);
    }
    if (groups.size() < 2 || (!with_previous && groups.back().attributes.empty())) continue;
    const double tau = 0.1 + 0.05 * static_cast<double>(gen() % 19);
    const AttentionMaps cur = testing::random_maps(rng, 6, 5, l, 10, 1.5);
    const std::optional<AttentionMaps> prev =
        with_previous ? std::optional(testing::random_maps(rng, 6, 5, l, 11, 1.5)) : std::nullopt;
    const double got = conform_loss(cur, prev, groups, LossConfig{tau});
    worst = std::max(worst, std::abs(got - testing::naive_conform_loss(cur, prev, groups, tau)));
    ++evaluated;
  }
  return {worst <= 1e-12, fmt("max |diff| %.2e over %.0f instances", worst, evaluated)};
}

Outcome closed_forms() {
  double worst = 0.0;
  for (std::size_t n = 1; n <= 9; ++n)
    for (double s : {-0.5, 0.0, 0.3, 1.0})
      for (double tau : {0.25, 0.5, 1.0}) {
        const std::vector<double> negatives(n, s);
        worst = std::max(worst, std::abs(infonce(s, negatives, LossConfig{tau}) - std::log(1.0 + n)));
      }
  const double expected = -std::log(std::exp(1.0 / 0.5) / (std::exp(1.0 / 0.5) + 2.0));
  const std::vector<double> orth{0.0, 0.0};
  const double got = infonce(1.0, orth, LossConfig{0.5});
  const double err = std::max(worst, std::abs(got - expected));
  return {err <= 1e-12, fmt("log(1+N) and %.6f anchors, max |diff| %.2e", got, err)};
}

Outcome pair_counts() {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_groups = 2 + gen() % 5;
    std::vector<std::size_t> sizes(n_groups), labels;
    for (std::size_t g = 0; g < n_groups; ++g) {
      sizes[g] = 2 + gen() % 5;
      labels.insert(labels.end(), sizes[g], g);
    }
    std::shuffle(labels.begin(), labels.end(), gen);
    const std::size_t f = labels.size();
    const PairSet pairs = enumerate_pairs(labels);
    std::size_t expected = 0;
    for (std::size_t g : sizes) expected += g * (g - 1);
    if (pairs.entries.size() != expected) return {false, fmt("trial %.0f: %.0f pairs, expected %.0f", trial,
                                                             double(pairs.entries.size()), double(expected))};
    // Exhaustive enumeration in the same order.
    std::size_t k = 0;
    for (std::size_t a = 0; a < f; ++a)
      for (std::size_t p = 0; p < f; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        const PairEntry& e = pairs.entries[k++];
        if (e.anchor != a || e.positive != p) return {false, fmt("trial %.0f: entry order differs", trial)};
        std::vector<std::size_t> negatives;
        for (std::size_t m = 0; m < f; ++m)
          if (labels[m] != labels[a]) negatives.push_back(m);
        if (e.negatives != negatives || negatives.size() != f - sizes[labels[a]]) {
          return {false, fmt("trial %.0f: negatives differ at anchor %.0f", trial, double(a))};
        }
      }
  }
  return {true, "50 random group structures"};
}

Outcome schedule_conformance() {
  GuidanceConfig cfg;
  cfg.refine_at = {0, 10, 20};
  cfg.refine_iters = 5;
  cfg.cutoff_step = 25;
  cfg.total_steps = 50;
  const ToyModel model = ToyModel::create(ModelShape{}, 0, cfg.total_steps);
  const Trajectory traj = guided_sample(model, kGroups, cfg);
  std::size_t refine = 0, single = 0, none = 0;
  for (const StepRecord& s : traj.steps) {
    const std::size_t n = s.losses.size();
    const std::size_t i = s.step_index;
    const std::size_t want = i >= 25 ? 0 : (i == 0 || i == 10 || i == 20) ? 5 : 1;
    if (n != want) return {false, fmt("step %.0f: %.0f evaluations, expected %.0f", double(i), double(n), double(want))};
    (want == 5 ? refine : want == 1 ? single : none)++;
  }
  return {traj.steps.size() == 50,
          fmt("%.0f steps x5, %.0f steps x1, %.0f steps x0", double(refine), double(single), double(none))};
}

Outcome guidance_direction() {
  GuidanceConfig cfg;
  const ToyModel model = ToyModel::create(ModelShape{}, 0, cfg.total_steps);
  const auto start = Clock::now();
  double gb = 0, gs = 0, ub = 0, us = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    cfg.seed = s;
    const AttentionMaps guided = guided_sample(model, kGroups, cfg).steps.back().maps;
    const AttentionMaps plain = unguided_sample(model, cfg).steps.back().maps;
    gb += binding_score(guided, kGroups);
    gs += separation_score(guided, kGroups);
    ub += binding_score(plain, kGroups);
    us += separation_score(plain, kGroups);
  }
  const double secs = seconds_since(start);
  gb /= kSeeds, gs /= kSeeds, ub /= kSeeds, us /= kSeeds;
  return {gs < us && gb > ub && secs < 300.0,
          fmt("separation %.4f < %.4f, binding %.4f > %.4f", gs, us, gb, ub) + fmt(", %.1f s", secs)};
}

Outcome cross_timestep_effect() {
  GuidanceConfig with;
  GuidanceConfig without;
  without.cross_timestep = false;
  const ToyModel model = ToyModel::create(ModelShape{}, 0, with.total_steps);
  double a = 0, b = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    with.seed = without.seed = s;
    a += mean_scatter(build_report(guided_sample(model, kGroups, with), kGroups, s, true), 0, with.cutoff_step);
    b += mean_scatter(build_report(guided_sample(model, kGroups, without), kGroups, s, true), 0, with.cutoff_step);
  }
  a /= kSeeds, b /= kSeeds;
  return {a < b, fmt("mean pre-cutoff scatter %.6f with previous maps vs %.6f without", a, b)};
}

Outcome baseline_reduction() {
  GuidanceConfig cfg;
  cfg.alpha = 0.0;
  cfg.refine_at = {};
  cfg.seed = 3;
  const ToyModel model = ToyModel::create(ModelShape{}, 0, cfg.total_steps);
  const Trajectory guided = guided_sample(model, kGroups, cfg);
  const Trajectory plain = unguided_sample(model, cfg);
  if (guided.steps.size() != 50 || plain.steps.size() != 50) return {false, "wrong step count"};
  for (std::size_t i = 0; i < 50; ++i) {
    if (!bitwise_equal(guided.steps[i].latent, plain.steps[i].latent) ||
        !bitwise_equal(guided.steps[i].maps.maps, plain.steps[i].maps.maps)) {
      return {false, fmt("first difference at step %.0f", double(i))};
    }
  }
  return {true, "latents and maps bitwise identical over 50 steps"};
}

Outcome determinism(const fs::path& dir) {
  const fs::path config = dir / "determinism.json";
  cli::save_config(default_run(dir / "det-out"), config);
  const std::string cmd = std::string(CONFORM_TOOL) + " run --config " + config.string() + " --seed 11 >/dev/null";
  if (std::system(cmd.c_str()) != 0) return {false, "first invocation failed"};
  const std::string first = read_file(dir / "det-out" / "report.json");
  fs::remove_all(dir / "det-out");
  if (std::system(cmd.c_str()) != 0) return {false, "second invocation failed"};
  const std::string second = read_file(dir / "det-out" / "report.json");
  return {!first.empty() && first == second, fmt("two process runs, %.0f-byte reports identical", double(first.size()))};
}

Outcome row_sums() {
  GuidanceConfig cfg;
  cfg.seed = 5;
  const ToyModel model = ToyModel::create(ModelShape{}, 0, cfg.total_steps);
  const Trajectory traj = guided_sample(model, kGroups, cfg);
  double worst = 0.0;
  for (const StepRecord& s : traj.steps) {
    const AttentionMaps& m = s.maps;
    for (std::size_t p = 0; p < m.h * m.w; ++p) {
      double total = 0.0;
      for (std::size_t j = 0; j < m.l; ++j) total += m.maps[p * m.l + j];
      worst = std::max(worst, std::abs(total - 1.0));
    }
  }
  return {worst <= 1e-10, fmt("max |row sum - 1| %.2e over %.0f steps", worst, double(traj.steps.size()))};
}

}  // namespace

int main() {
  const fs::path dir = scratch_dir();
  report(1, "gradient oracle", [&] { return gradient_oracle(dir); });
  report(2, "loss brute force", brute_force);
  report(3, "closed-form anchors", closed_forms);
  report(4, "pair-count oracle", pair_counts);
  report(5, "refinement schedule", schedule_conformance);
  report(6, "guidance direction", guidance_direction);
  report(7, "cross-timestep effect", cross_timestep_effect);
  report(8, "baseline reduction", baseline_reduction);
  report(9, "determinism", [&] { return determinism(dir); });
  report(10, "attention normalization", row_sums);
  fs::remove_all(dir);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
