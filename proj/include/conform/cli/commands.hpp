#pragma once

// Subcommand implementations behind tools/conform. Each returns the process
// exit code and reports failures as one line "<kind>: <detail>" on `err`:
//   0 success, 1 check-failure, 2 config-error, 3 numeric-error / io-error.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "conform/cli/config.hpp"
#include "conform/gradcheck.hpp"

namespace conform::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailure = 1, kConfigError = 2, kRuntimeError = 3 };

/// Command-line values that replace config-file entries when present.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<double> alpha;
  std::optional<std::size_t> steps;
  std::optional<std::set<std::size_t>> refine_at;
  std::optional<std::size_t> refine_iters;
  std::optional<std::size_t> cutoff;
  std::optional<std::string> out_dir;

  /// Applies and re-validates.
  void apply(RunConfig& cfg) const;
};

inline const std::vector<double> kDefaultTauGrid = {0.25, 0.5, 0.75, 1.0};

struct AblationRow {
  double tau = 0.0;
  std::size_t runs = 0;
  std::optional<double> mean_binding;  // absent when every group is a single token
  double mean_separation = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // sorted by tau
  std::size_t runs_executed = 0;
};

/// One guided run per (tau, seed) with seeds cfg.guidance.seed .. + seeds - 1.
/// Runs execute on a worker pool; aggregation follows (tau, seed) order.
/// Throws ConfigError (field "tau-grid") for an empty grid or tau <= 0.
AblationResult run_ablation(const RunConfig& cfg, const std::vector<double>& tau_grid, std::size_t seeds);

int cmd_run(const std::filesystem::path& config_path, bool guided, const Overrides& overrides, std::ostream& out,
            std::ostream& err);

int cmd_ablate(const std::filesystem::path& config_path, const std::vector<double>& tau_grid, std::size_t seeds,
               const Overrides& overrides, std::ostream& out, std::ostream& err);

int cmd_gradcheck(const std::filesystem::path& config_path, const Overrides& overrides,
                  const GradcheckOptions& options, std::ostream& out, std::ostream& err);

int cmd_bench(const std::string& template_name, std::size_t count, const std::filesystem::path& out_dir,
              std::ostream& out, std::ostream& err);

/// Parses "0,10,20" style lists. Throws ConfigError naming `field`.
std::vector<double> parse_number_list(const std::string& text, const std::string& field);
std::set<std::size_t> parse_index_list(const std::string& text, const std::string& field);

}  // namespace conform::cli
