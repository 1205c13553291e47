#include "conform/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "conform/errors.hpp"

namespace conform::cli {

using json = nlohmann::ordered_json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json report_to_json(const RunReport& report, const RunConfig& config) {
  json doc;
  doc["format"] = kReportFormat;
  doc["guided"] = report.guided;
  doc["seed"] = report.seed;
  doc["config"] = to_json(config);

  json steps = json::array();
  for (const StepMetrics& s : report.steps) {
    json e;
    e["step"] = s.step_index;
    e["timestep"] = s.timestep;
    e["loss_evaluations"] = s.losses.size();
    if (!s.losses.empty()) {
      e["loss"] = s.losses.back();
      e["losses"] = s.losses;
    }
    e["binding_score"] = optional_number(s.binding);
    e["separation_score"] = optional_number(s.separation);
    e["scatter_score"] = optional_number(s.scatter);
    steps.push_back(std::move(e));
  }
  doc["steps"] = std::move(steps);

  const AttentionMaps& m = report.final_maps;
  json maps;
  maps["timestep"] = m.timestep;
  maps["h"] = m.h;
  maps["w"] = m.w;
  maps["l"] = m.l;
  maps["data"] = std::vector<double>(m.maps.data().begin(), m.maps.data().end());
  doc["final_maps"] = std::move(maps);
  return doc;
}

void write_report(const RunReport& report, const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << report_to_json(report, config).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void write_pgm(const Tensor& map, std::ostream& out) {
  if (map.rank() != 2) throw DimensionError("map export expects [h, w], got " + to_string(map.shape()));
  if (!map.all_finite()) throw NumericError("map export: non-finite value");
  const std::size_t h = map.shape()[0], w = map.shape()[1];
  const auto [lo_it, hi_it] = std::minmax_element(map.data().begin(), map.data().end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  out << "P2\n" << w << ' ' << h << "\n255\n";
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const long pixel = range > 0.0 ? std::lround((map.at(i, j) - lo) / range * 255.0) : 0L;
      out << (j ? " " : "") << pixel;
    }
    out << '\n';
  }
}

void export_map(const Tensor& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_pgm(map, out);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace conform::cli
