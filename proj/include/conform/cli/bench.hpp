#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conform/cli/config.hpp"

namespace conform::cli {

/// Prompt pattern and the token groups it induces. Token indices are
/// positions in the tokenized pattern with index 0 the start token.
struct BenchmarkTemplate {
  std::string name;
  std::string pattern;
  TokenGroups groups;
};

std::span<const BenchmarkTemplate> benchmark_templates();

/// Throws ConfigError (field "template") for an unknown name.
const BenchmarkTemplate& benchmark_template(std::string_view name);

/// `count` run configs following the template. Config k uses model seed k
/// (a distinct synthetic prompt) and sampling seed k.
std::vector<RunConfig> generate_benchmark(std::string_view name, std::size_t count, const RunConfig& base = {});

}  // namespace conform::cli
