#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "conform/pairing.hpp"
#include "conform/sampler.hpp"
#include "conform/toy_model.hpp"
#include "json.hpp"

namespace conform::cli {

/// Contents of a run configuration file. Schema: docs/config-schema.md.
struct RunConfig {
  GuidanceConfig guidance;
  ModelShape model;
  std::uint64_t model_seed = 0;
  TokenGroups groups;
  std::string output_dir = "conform_out";

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses and validates. Throws ConfigError with a dotted field path
/// ("groups", "guidance.tau", ...) on any missing, mistyped, unknown or
/// invalid entry.
RunConfig parse_config(const nlohmann::ordered_json& doc);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace conform::cli
