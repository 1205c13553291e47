#pragma once

#include <filesystem>
#include <ostream>

#include "conform/cli/config.hpp"
#include "conform/metrics.hpp"
#include "json.hpp"

namespace conform::cli {

inline constexpr const char* kReportFormat = "conform.run-report.v1";

/// Report document: config echo, one record per executed step and the final
/// attention maps as a row-major [h, w, l] array. Loss keys appear only on
/// steps where the loss was evaluated.
nlohmann::ordered_json report_to_json(const RunReport& report, const RunConfig& config);
void write_report(const RunReport& report, const RunConfig& config, const std::filesystem::path& path);

/// Writes a [h, w] map as plain-text grayscale (P2, maxval 255). The map's
/// minimum becomes 0 and its maximum 255, rounding half away from zero; a
/// constant map becomes all zeros.
void write_pgm(const Tensor& map, std::ostream& out);
/// Throws IoError if `path` cannot be written.
void export_map(const Tensor& map, const std::filesystem::path& path);

}  // namespace conform::cli
