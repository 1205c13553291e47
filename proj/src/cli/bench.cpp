#include "conform/cli/bench.hpp"

#include <algorithm>

#include "conform/errors.hpp"

namespace conform::cli {

namespace {

// Positions assume one token per word after a start token at index 0.
const std::vector<BenchmarkTemplate>& registry() {
  static const std::vector<BenchmarkTemplate> templates = {
      // <s> a horse and a bird
      {"animal-animal", "a [animalA] and a [animalB]", {{2, {}}, {5, {}}}},
      // <s> a frog and a purple balloon
      {"animal-object", "a [animal] and a [color][object]", {{2, {}}, {6, {5}}}},
      // <s> a black crown and a red car
      {"object-object", "a [colorA][objectA] and a [colorB][objectB]", {{3, {2}}, {7, {6}}}},
      // <s> one zebra and two birds
      {"multi-object", "[numberA][animalA] and [numberB][animalB]", {{2, {1}}, {5, {4}}}},
  };
  return templates;
}

}  // namespace

std::span<const BenchmarkTemplate> benchmark_templates() { return registry(); }

const BenchmarkTemplate& benchmark_template(std::string_view name) {
  const auto& all = registry();
  auto it = std::find_if(all.begin(), all.end(), [&](const auto& t) { return t.name == name; });
  if (it == all.end()) {
    throw ConfigError("template", "unknown benchmark template '" + std::string(name) +
                                      "' (expected animal-animal, animal-object, object-object or multi-object)");
  }
  return *it;
}

std::vector<RunConfig> generate_benchmark(std::string_view name, std::size_t count, const RunConfig& base) {
  const BenchmarkTemplate& tmpl = benchmark_template(name);
  std::vector<RunConfig> configs;
  configs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    RunConfig cfg = base;
    cfg.groups = tmpl.groups;
    cfg.model_seed = k;
    cfg.guidance.seed = k;
    cfg.validate();
    configs.push_back(std::move(cfg));
  }
  return configs;
}

}  // namespace conform::cli
