#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "conform/cli/commands.hpp"
#include "conform/errors.hpp"

using namespace conform;
using namespace conform::cli;

namespace {

struct RawOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> tau, alpha;
  std::optional<std::size_t> steps, refine_iters, cutoff;
  std::optional<std::string> refine_at, out_dir;
};

void add_overrides(CLI::App* cmd, RawOverrides& raw, bool with_tau) {
  cmd->add_option("--seed", raw.seed, "Sampling seed");
  if (with_tau) cmd->add_option("--tau", raw.tau, "Temperature");
  cmd->add_option("--alpha", raw.alpha, "Latent step size");
  cmd->add_option("--steps", raw.steps, "Total denoising steps");
  cmd->add_option("--refine-at", raw.refine_at, "Comma-separated refinement steps");
  cmd->add_option("--refine-iters", raw.refine_iters, "Iterations at refinement steps");
  cmd->add_option("--cutoff", raw.cutoff, "First step without guidance");
  cmd->add_option("--out-dir", raw.out_dir, "Output directory");
}

Overrides resolve(const RawOverrides& raw) {
  Overrides o;
  o.seed = raw.seed;
  o.tau = raw.tau;
  o.alpha = raw.alpha;
  o.steps = raw.steps;
  o.refine_iters = raw.refine_iters;
  o.cutoff = raw.cutoff;
  o.out_dir = raw.out_dir;
  if (raw.refine_at) o.refine_at = parse_index_list(*raw.refine_at, "refine-at");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive attention guidance on a toy latent denoiser"};
  app.require_subcommand(1);

  std::string config;
  RawOverrides raw;

  auto* run = app.add_subcommand("run", "Sample one trajectory and write report.json plus token maps");
  run->add_option("--config", config, "Run configuration (JSON)")->required();
  bool unguided = false;
  run->add_flag("--guided,!--unguided", [&](std::int64_t n) { unguided = n < 0; }, "Enable or disable guidance");
  add_overrides(run, raw, true);

  auto* ablate = app.add_subcommand("ablate", "Sweep the temperature over several seeds");
  ablate->add_option("--config", config, "Run configuration (JSON)")->required();
  std::string tau_grid;
  std::size_t count = 4;
  ablate->add_option("--tau-grid", tau_grid, "Comma-separated temperatures (default 0.25,0.5,0.75,1.0)");
  ablate->add_option("--count", count, "Seeds per temperature")->capture_default_str();
  add_overrides(ablate, raw, false);

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare latent gradients against finite differences");
  gradcheck->add_option("--config", config, "Run configuration (JSON)")->required();
  GradcheckOptions gc;
  double perturb = 0.0;
  gradcheck->add_option("--points", gc.points, "Number of random latents")->capture_default_str();
  gradcheck->add_option("--fd-step", gc.h, "Finite-difference step")->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  gradcheck->add_option("--perturb-autodiff", perturb)->group("");
  add_overrides(gradcheck, raw, true);

  auto* bench = app.add_subcommand("bench", "Write benchmark run configurations");
  std::string template_name;
  std::string bench_dir = "bench";
  std::size_t bench_count = 10;
  bench->add_option("--template", template_name, "animal-animal, animal-object, object-object or multi-object")
      ->required();
  bench->add_option("--count", bench_count, "Number of configurations")->capture_default_str();
  bench->add_option("--out-dir", bench_dir, "Destination directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "config-error: " << e.what() << '\n';
    return kConfigError;
  }

  Overrides overrides;
  std::vector<double> grid = kDefaultTauGrid;
  try {
    overrides = resolve(raw);
    if (!tau_grid.empty()) grid = parse_number_list(tau_grid, "tau-grid");
  } catch (const ConfigError& e) {
    std::cerr << "config-error: " << e.what() << '\n';
    return kConfigError;
  }

  if (*run) return cmd_run(config, !unguided, overrides, std::cout, std::cerr);
  if (*ablate) return cmd_ablate(config, grid, count, overrides, std::cout, std::cerr);
  if (*gradcheck) {
    if (perturb != 0.0) {
      gc.perturb_autodiff = [perturb](Tensor& g) {
        for (double& v : g.data()) v += perturb;
      };
    }
    return cmd_gradcheck(config, overrides, gc, std::cout, std::cerr);
  }
  return cmd_bench(template_name, bench_count, bench_dir, std::cout, std::cerr);
}
