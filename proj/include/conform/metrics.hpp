#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "conform/attention.hpp"
#include "conform/pairing.hpp"
#include "conform/sampler.hpp"

namespace conform {

// Attention-map quality proxies. All use cosine similarity of flattened token
// maps, so for softmax maps they lie in [0, 1].

/// Mean similarity over within-group ordered token pairs. Groups with a single
/// token contribute nothing; throws DegenerateInputError if no group has two tokens.
double binding_score(const AttentionMaps& maps, const TokenGroups& groups);

/// Mean similarity over cross-group ordered token pairs (lower is better
/// separated). Throws DegenerateInputError for fewer than two groups.
double separation_score(const AttentionMaps& maps, const TokenGroups& groups);

/// 1 - mean similarity of each grouped token's map at t with its map at t+1.
/// 0 means perfectly stable. Throws DimensionError if the maps differ in shape.
double scatter_score(const AttentionMaps& current, const AttentionMaps& previous, const TokenGroups& groups);

using ScalarFunction = std::function<double(const Tensor&)>;

/// Central differences (f(z + h e_k) - f(z - h e_k)) / 2h for every coordinate.
/// Throws NumericError if f returns a non-finite value.
Tensor finite_diff_grad(const ScalarFunction& f, const Tensor& z, double h);

/// Largest |a - b| / (|b| + floor) over coordinates; `b` is the reference.
struct RelativeError {
  double value = 0.0;
  std::size_t index = 0;
};
RelativeError max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

struct StepMetrics {
  std::size_t step_index = 0;
  int timestep = 0;
  std::vector<double> losses;
  std::optional<double> binding;
  std::optional<double> separation;
  std::optional<double> scatter;
};

/// Per-step metrics for a whole trajectory.
struct RunReport {
  std::uint64_t seed = 0;
  bool guided = true;
  std::vector<StepMetrics> steps;
  AttentionMaps final_maps;
};

RunReport build_report(const Trajectory& trajectory, const TokenGroups& groups, std::uint64_t seed, bool guided);

/// Mean scatter over steps in [first, last) that have one.
double mean_scatter(const RunReport& report, std::size_t first, std::size_t last);

}  // namespace conform
