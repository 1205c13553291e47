#include "conform/metrics.hpp"

#include <cmath>
#include <string>

#include "conform/errors.hpp"
#include "conform/loss.hpp"

namespace conform {

namespace {

std::vector<std::size_t> tokens_of(const TokenGroup& g) {
  std::vector<std::size_t> tokens{g.subject};
  tokens.insert(tokens.end(), g.attributes.begin(), g.attributes.end());
  return tokens;
}

std::vector<Tensor> group_maps(const AttentionMaps& maps, const TokenGroup& g) {
  std::vector<Tensor> out;
  for (std::size_t t : tokens_of(g)) out.push_back(token_map(maps, t));
  return out;
}

}  // namespace

double binding_score(const AttentionMaps& maps, const TokenGroups& groups) {
  validate_groups(groups, maps.l);
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& g : groups) {
    const auto m = group_maps(maps, g);
    for (std::size_t a = 0; a < m.size(); ++a) {
      for (std::size_t b = 0; b < m.size(); ++b) {
        if (a == b) continue;
        total += cosine_similarity(m[a].data(), m[b].data());
        ++pairs;
      }
    }
  }
  if (pairs == 0) throw DegenerateInputError("binding score undefined: every group has a single token");
  return total / static_cast<double>(pairs);
}

double separation_score(const AttentionMaps& maps, const TokenGroups& groups) {
  validate_groups(groups, maps.l);
  if (groups.size() < 2) throw DegenerateInputError("separation score undefined for fewer than two groups");
  std::vector<std::vector<Tensor>> all;
  for (const auto& g : groups) all.push_back(group_maps(maps, g));
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t gi = 0; gi < all.size(); ++gi) {
    for (std::size_t gj = 0; gj < all.size(); ++gj) {
      if (gi == gj) continue;
      for (const auto& u : all[gi]) {
        for (const auto& v : all[gj]) {
          total += cosine_similarity(u.data(), v.data());
          ++pairs;
        }
      }
    }
  }
  return total / static_cast<double>(pairs);
}

double scatter_score(const AttentionMaps& current, const AttentionMaps& previous, const TokenGroups& groups) {
  if (current.maps.shape() != previous.maps.shape()) {
    throw DimensionError("scatter_score shape mismatch: " + to_string(current.maps.shape()) + " vs " +
                         to_string(previous.maps.shape()));
  }
  validate_groups(groups, current.l);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& g : groups) {
    for (std::size_t t : tokens_of(g)) {
      total += cosine_similarity(token_map(current, t).data(), token_map(previous, t).data());
      ++count;
    }
  }
  if (count == 0) throw DegenerateInputError("scatter score undefined without grouped tokens");
  return 1.0 - total / static_cast<double>(count);
}

Tensor finite_diff_grad(const ScalarFunction& f, const Tensor& z, double h) {
  if (!(h > 0.0)) throw ContractError("finite difference step must be positive");
  Tensor grad(z.shape());
  Tensor probe = z;
  for (std::size_t k = 0; k < z.size(); ++k) {
    probe[k] = z[k] + h;
    const double up = f(probe);
    probe[k] = z[k] - h;
    const double down = f(probe);
    probe[k] = z[k];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite-difference oracle: non-finite function value at coordinate " + std::to_string(k));
    }
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

RelativeError max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_relative_error shape mismatch: " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  RelativeError worst;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = std::abs(a[i] - b[i]) / (std::abs(b[i]) + floor);
    if (e > worst.value || i == 0) worst = {e, i};
  }
  return worst;
}

RunReport build_report(const Trajectory& trajectory, const TokenGroups& groups, std::uint64_t seed, bool guided) {
  RunReport report;
  report.seed = seed;
  report.guided = guided;
  const AttentionMaps* previous = nullptr;
  for (const StepRecord& rec : trajectory.steps) {
    StepMetrics m;
    m.step_index = rec.step_index;
    m.timestep = rec.timestep;
    m.losses = rec.losses;
    try {
      m.binding = binding_score(rec.maps, groups);
    } catch (const DegenerateInputError&) {
    }
    try {
      m.separation = separation_score(rec.maps, groups);
    } catch (const DegenerateInputError&) {
    }
    if (previous) m.scatter = scatter_score(rec.maps, *previous, groups);
    report.steps.push_back(std::move(m));
    previous = &rec.maps;
  }
  if (!trajectory.steps.empty()) report.final_maps = trajectory.steps.back().maps;
  return report;
}

double mean_scatter(const RunReport& report, std::size_t first, std::size_t last) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : report.steps) {
    if (s.step_index < first || s.step_index >= last || !s.scatter) continue;
    total += *s.scatter;
    ++n;
  }
  if (n == 0) throw DegenerateInputError("no scatter scores in the requested step range");
  return total / static_cast<double>(n);
}

}  // namespace conform
