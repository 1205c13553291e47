#include "conform/cli/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "conform/errors.hpp"

namespace conform::cli {

using json = nlohmann::ordered_json;

namespace {

std::string join(const std::string& prefix, std::string_view key) {
  return prefix.empty() ? std::string(key) : prefix + "." + std::string(key);
}

void reject_unknown(const json& obj, const std::string& prefix, std::initializer_list<std::string_view> known) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError(join(prefix, item.key()), "unknown field");
  }
}

const json& require_object(const json& parent, std::string_view key, const std::string& field) {
  if (!parent.contains(key)) throw ConfigError(field, "missing required field");
  const json& v = parent.at(std::string(key));
  if (!v.is_object()) throw ConfigError(field, "expected an object");
  return v;
}

std::uint64_t read_u64(const json& v, const std::string& field) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(field, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::size_t read_index(const json& v, const std::string& field) {
  return static_cast<std::size_t>(read_u64(v, field));
}

double read_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  return v.get<double>();
}

bool read_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) throw ConfigError(field, "expected true or false");
  return v.get<bool>();
}

template <typename T, typename Reader>
void optional_field(const json& obj, std::string_view key, const std::string& prefix, T& out, Reader read) {
  if (obj.contains(key)) out = read(obj.at(std::string(key)), join(prefix, key));
}

GuidanceConfig parse_guidance(const json& g) {
  const std::string p = "guidance";
  reject_unknown(g, p, {"tau", "alpha", "total_steps", "refine_at", "refine_iters", "cutoff_step", "seed",
                        "cross_timestep"});
  GuidanceConfig cfg;
  optional_field(g, "tau", p, cfg.tau, read_number);
  optional_field(g, "alpha", p, cfg.alpha, read_number);
  optional_field(g, "total_steps", p, cfg.total_steps, read_index);
  optional_field(g, "refine_iters", p, cfg.refine_iters, read_index);
  optional_field(g, "cutoff_step", p, cfg.cutoff_step, read_index);
  optional_field(g, "seed", p, cfg.seed, read_u64);
  optional_field(g, "cross_timestep", p, cfg.cross_timestep, read_bool);
  if (g.contains("refine_at")) {
    const json& list = g.at("refine_at");
    if (!list.is_array()) throw ConfigError("guidance.refine_at", "expected an array of step indices");
    cfg.refine_at.clear();
    for (const auto& v : list) cfg.refine_at.insert(read_index(v, "guidance.refine_at"));
  }
  return cfg;
}

TokenGroups parse_groups(const json& doc) {
  if (!doc.contains("groups")) throw ConfigError("groups", "missing required field");
  const json& list = doc.at("groups");
  if (!list.is_array()) throw ConfigError("groups", "expected an array of {subject, attributes}");
  TokenGroups groups;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string p = "groups[" + std::to_string(i) + "]";
    const json& g = list[i];
    if (!g.is_object()) throw ConfigError(p, "expected an object");
    reject_unknown(g, p, {"subject", "attributes"});
    if (!g.contains("subject")) throw ConfigError(p + ".subject", "missing required field");
    TokenGroup group;
    group.subject = read_index(g.at("subject"), p + ".subject");
    if (g.contains("attributes")) {
      const json& attrs = g.at("attributes");
      if (!attrs.is_array()) throw ConfigError(p + ".attributes", "expected an array of token indices");
      for (const auto& a : attrs) group.attributes.push_back(read_index(a, p + ".attributes"));
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace

void RunConfig::validate() const {
  guidance.validate();
  model.validate();
  if (groups.size() < 2) throw ConfigError("groups", "at least two groups are required to form negative pairs");
  validate_groups(groups, model.l);
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config", "top level must be an object");
  reject_unknown(doc, "", {"guidance", "model", "groups", "output_dir"});
  RunConfig cfg;
  if (doc.contains("guidance")) cfg.guidance = parse_guidance(require_object(doc, "guidance", "guidance"));
  if (doc.contains("model")) {
    const json& m = require_object(doc, "model", "model");
    const std::string p = "model";
    reject_unknown(m, p, {"h", "w", "c", "d", "l", "d_text", "seed"});
    optional_field(m, "h", p, cfg.model.h, read_index);
    optional_field(m, "w", p, cfg.model.w, read_index);
    optional_field(m, "c", p, cfg.model.c, read_index);
    optional_field(m, "d", p, cfg.model.d, read_index);
    optional_field(m, "l", p, cfg.model.l, read_index);
    optional_field(m, "d_text", p, cfg.model.d_text, read_index);
    optional_field(m, "seed", p, cfg.model_seed, read_u64);
  }
  cfg.groups = parse_groups(doc);
  if (doc.contains("output_dir")) {
    const json& o = doc.at("output_dir");
    if (!o.is_string()) throw ConfigError("output_dir", "expected a string");
    cfg.output_dir = o.get<std::string>();
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

json to_json(const RunConfig& cfg) {
  json g;
  g["tau"] = cfg.guidance.tau;
  g["alpha"] = cfg.guidance.alpha;
  g["total_steps"] = cfg.guidance.total_steps;
  g["refine_at"] = json::array();
  for (std::size_t i : cfg.guidance.refine_at) g["refine_at"].push_back(i);
  g["refine_iters"] = cfg.guidance.refine_iters;
  g["cutoff_step"] = cfg.guidance.cutoff_step;
  g["seed"] = cfg.guidance.seed;
  g["cross_timestep"] = cfg.guidance.cross_timestep;

  json m;
  m["h"] = cfg.model.h;
  m["w"] = cfg.model.w;
  m["c"] = cfg.model.c;
  m["d"] = cfg.model.d;
  m["l"] = cfg.model.l;
  m["d_text"] = cfg.model.d_text;
  m["seed"] = cfg.model_seed;

  json groups = json::array();
  for (const auto& grp : cfg.groups) {
    json e;
    e["subject"] = grp.subject;
    e["attributes"] = grp.attributes;
    groups.push_back(std::move(e));
  }

  json doc;
  doc["guidance"] = std::move(g);
  doc["model"] = std::move(m);
  doc["groups"] = std::move(groups);
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace conform::cli
