#include "conform/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "conform/cli/bench.hpp"
#include "conform/cli/report.hpp"
#include "conform/errors.hpp"
#include "conform/metrics.hpp"

namespace conform::cli {

namespace fs = std::filesystem;

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// Runs `body`, translating library exceptions into the exit-code contract.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config-error: " << one_line(e.what()) << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "io-error: " << one_line(e.what()) << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "numeric-error: " << one_line(e.what()) << '\n';
    return kRuntimeError;
  }
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

ToyModel model_for(const RunConfig& cfg) {
  return ToyModel::create(cfg.model, cfg.model_seed, cfg.guidance.total_steps);
}

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << *v;
  return s.str();
}

// Comma-separated fields, keeping empty ones so "1,,2" and "1," are rejected.
std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::size_t start = 0;
  for (std::size_t comma; (comma = text.find(',', start)) != std::string::npos; start = comma + 1) {
    items.push_back(text.substr(start, comma - start));
  }
  items.push_back(text.substr(start));
  return items;
}

}  // namespace

void Overrides::apply(RunConfig& cfg) const {
  if (seed) cfg.guidance.seed = *seed;
  if (tau) cfg.guidance.tau = *tau;
  if (alpha) cfg.guidance.alpha = *alpha;
  if (steps) cfg.guidance.total_steps = *steps;
  if (refine_at) cfg.guidance.refine_at = *refine_at;
  if (refine_iters) cfg.guidance.refine_iters = *refine_iters;
  if (cutoff) cfg.guidance.cutoff_step = *cutoff;
  if (out_dir) cfg.output_dir = *out_dir;
  cfg.validate();
}

std::vector<double> parse_number_list(const std::string& text, const std::string& field) {
  std::vector<double> values;
  for (const std::string& item : split_list(text)) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(field, "not a number: '" + item + "'");
    }
  }
  return values;
}

std::set<std::size_t> parse_index_list(const std::string& text, const std::string& field) {
  std::set<std::size_t> values;
  if (text.empty()) return values;
  for (const std::string& item : split_list(text)) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || item.empty()) {
      throw ConfigError(field, "not a step index: '" + item + "'");
    }
    values.insert(v);
  }
  return values;
}

AblationResult run_ablation(const RunConfig& cfg, const std::vector<double>& tau_grid, std::size_t seeds) {
  if (tau_grid.empty()) throw ConfigError("tau-grid", "empty grid");
  for (double tau : tau_grid) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau-grid", "every tau must be > 0");
  }
  if (seeds == 0) throw ConfigError("count", "at least one seed is required");
  std::vector<double> grid = tau_grid;
  std::sort(grid.begin(), grid.end());

  struct Outcome {
    std::optional<double> binding;
    double separation = 0.0;
  };
  const ToyModel model = model_for(cfg);
  const std::size_t tasks = grid.size() * seeds;
  std::vector<Outcome> outcomes(tasks);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> executed{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < tasks;) {
      try {
        GuidanceConfig g = cfg.guidance;
        g.tau = grid[k / seeds];
        g.seed = cfg.guidance.seed + k % seeds;
        const Trajectory traj = guided_sample(model, cfg.groups, g);
        const AttentionMaps& last = traj.steps.back().maps;
        Outcome& o = outcomes[k];
        o.separation = separation_score(last, cfg.groups);
        try {
          o.binding = binding_score(last, cfg.groups);
        } catch (const DegenerateInputError&) {
        }
        ++executed;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, tasks);
  std::vector<std::jthread> pool;
  for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);

  AblationResult result;
  result.runs_executed = executed.load();
  for (std::size_t ti = 0; ti < grid.size(); ++ti) {
    AblationRow row;
    row.tau = grid[ti];
    row.runs = seeds;
    double binding = 0.0;
    bool binding_defined = true;
    for (std::size_t s = 0; s < seeds; ++s) {
      const Outcome& o = outcomes[ti * seeds + s];
      row.mean_separation += o.separation;
      if (o.binding) binding += *o.binding;
      else binding_defined = false;
    }
    row.mean_separation /= static_cast<double>(seeds);
    if (binding_defined) row.mean_binding = binding / static_cast<double>(seeds);
    result.rows.push_back(row);
  }
  return result;
}

int cmd_run(const fs::path& config_path, bool guided, const Overrides& overrides, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_config(config_path);
    overrides.apply(cfg);
    const ToyModel model = model_for(cfg);
    const Trajectory traj = guided ? guided_sample(model, cfg.groups, cfg.guidance) : unguided_sample(model, cfg.guidance);
    const RunReport report = build_report(traj, cfg.groups, cfg.guidance.seed, guided);

    const fs::path dir(cfg.output_dir);
    ensure_directory(dir);
    write_report(report, cfg, dir / "report.json");
    for (const auto& g : cfg.groups) {
      std::vector<std::size_t> tokens{g.subject};
      tokens.insert(tokens.end(), g.attributes.begin(), g.attributes.end());
      for (std::size_t t : tokens) {
        export_map(token_map(report.final_maps, t), dir / ("final_token_" + std::to_string(t) + ".pgm"));
      }
    }

    const StepMetrics& last = report.steps.back();
    out << (guided ? "guided" : "unguided") << " run seed=" << cfg.guidance.seed
        << " steps=" << report.steps.size() << " binding=" << format_optional(last.binding)
        << " separation=" << format_optional(last.separation) << " report=" << (dir / "report.json").string()
        << '\n';
    return static_cast<int>(kSuccess);
  });
}

int cmd_ablate(const fs::path& config_path, const std::vector<double>& tau_grid, std::size_t seeds,
               const Overrides& overrides, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_config(config_path);
    overrides.apply(cfg);
    const AblationResult result = run_ablation(cfg, tau_grid, seeds);

    nlohmann::ordered_json doc;
    doc["format"] = "conform.ablation.v1";
    doc["config"] = to_json(cfg);
    doc["seeds"] = seeds;
    doc["runs_executed"] = result.runs_executed;
    doc["rows"] = nlohmann::ordered_json::array();
    out << "tau        runs  binding    separation\n";
    for (const AblationRow& row : result.rows) {
      nlohmann::ordered_json r;
      r["tau"] = row.tau;
      r["runs"] = row.runs;
      r["mean_binding"] = row.mean_binding ? nlohmann::ordered_json(*row.mean_binding) : nullptr;
      r["mean_separation"] = row.mean_separation;
      doc["rows"].push_back(std::move(r));
      out << std::left << std::setw(11) << row.tau << std::setw(6) << row.runs << std::setw(11)
          << format_optional(row.mean_binding) << format_optional(row.mean_separation) << '\n';
    }
    const fs::path dir(cfg.output_dir);
    ensure_directory(dir);
    std::ofstream file(dir / "ablation.json");
    if (!file) throw IoError("cannot write " + (dir / "ablation.json").string());
    file << doc.dump(2) << '\n';
    return static_cast<int>(kSuccess);
  });
}

int cmd_gradcheck(const fs::path& config_path, const Overrides& overrides, const GradcheckOptions& options,
                  std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_config(config_path);
    overrides.apply(cfg);
    const ToyModel model = model_for(cfg);
    const GradcheckReport report = run_gradcheck(model, cfg.groups, cfg.guidance, options);
    for (const GradcheckPoint& p : report.points) {
      out << "point seed=" << p.seed << " max_relative_error=" << std::scientific << std::setprecision(3)
          << p.max_relative_error << std::defaultfloat << ' '
          << (p.max_relative_error < report.tolerance ? "PASS" : "FAIL") << '\n';
    }
    const GradcheckPoint& worst = report.worst();
    out << "max relative error " << std::scientific << std::setprecision(3) << worst.max_relative_error
        << " (tolerance " << report.tolerance << ")" << std::defaultfloat << '\n';
    if (report.passed()) return static_cast<int>(kSuccess);
    err << "check-failure: seed " << worst.seed << " coordinate " << worst.worst_index << " autodiff "
        << std::setprecision(17) << worst.autodiff << " finite-difference " << worst.finite_difference
        << " relative error " << worst.max_relative_error << '\n';
    return static_cast<int>(kCheckFailure);
  });
}

int cmd_bench(const std::string& template_name, std::size_t count, const fs::path& out_dir, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    const BenchmarkTemplate& tmpl = benchmark_template(template_name);
    if (count == 0) return static_cast<int>(kSuccess);
    RunConfig base;
    base.groups = tmpl.groups;
    std::vector<RunConfig> configs = generate_benchmark(template_name, count, base);
    ensure_directory(out_dir);
    for (std::size_t k = 0; k < configs.size(); ++k) {
      std::ostringstream stem;
      stem << template_name << '-' << std::setw(3) << std::setfill('0') << k;
      configs[k].output_dir = (out_dir / (stem.str() + "-out")).string();
      const fs::path path = out_dir / (stem.str() + ".json");
      save_config(configs[k], path);
      out << path.string() << '\n';
    }
    return static_cast<int>(kSuccess);
  });
}

}  // namespace conform::cli
