#include "conform/pairing.hpp"

#include <map>
#include <set>
#include <string>

#include "conform/errors.hpp"

namespace conform {

void validate_groups(const TokenGroups& groups, std::size_t token_count) {
  std::set<std::size_t> seen;
  auto check = [&](std::size_t token, std::size_t group) {
    if (token >= token_count) {
      throw ConfigError("groups", "token index " + std::to_string(token) + " in group " + std::to_string(group) +
                                      " out of range for " + std::to_string(token_count) + " tokens");
    }
    if (!seen.insert(token).second) {
      throw ConfigError("groups", "token index " + std::to_string(token) + " appears more than once");
    }
  };
  for (std::size_t g = 0; g < groups.size(); ++g) {
    check(groups[g].subject, g);
    for (std::size_t a : groups[g].attributes) check(a, g);
  }
}

std::vector<LabeledFeature> build_features(Var current, const std::optional<AttentionMaps>& previous,
                                           const TokenGroups& groups) {
  const Shape& s = current.shape();
  if (s.size() != 3) throw DimensionError("attention maps must be [h, w, l], got " + to_string(s));
  if (previous && (previous->h != s[0] || previous->w != s[1] || previous->l != s[2])) {
    throw DimensionError("previous attention maps " + to_string(previous->maps.shape()) +
                         " do not match current " + to_string(s));
  }
  validate_groups(groups, s[2]);

  Tape& tape = current.tape();
  const std::size_t pixels = s[0] * s[1];
  std::vector<LabeledFeature> features;
  auto emit = [&](std::size_t label, std::size_t token) {
    features.push_back({label, token, FeatureSource::current, false, reshape(token_map(current, token), {pixels})});
    if (previous) {
      Var prev = tape.constant(token_map(*previous, token).reshaped({pixels}));
      features.push_back({label, token, FeatureSource::previous, true, prev});
    }
  };
  for (std::size_t g = 0; g < groups.size(); ++g) {
    emit(g, groups[g].subject);
    for (std::size_t a : groups[g].attributes) emit(g, a);
  }
  return features;
}

namespace {

std::map<std::size_t, std::size_t> label_counts(std::span<const std::size_t> labels) {
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t l : labels) ++counts[l];
  return counts;
}

}  // namespace

bool pairable(std::span<const std::size_t> labels) {
  const auto counts = label_counts(labels);
  if (counts.size() < 2) return false;
  for (const auto& [label, n] : counts)
    if (n < 2) return false;
  return true;
}

PairSet enumerate_pairs(std::span<const std::size_t> labels) {
  const auto counts = label_counts(labels);
  if (counts.size() < 2) throw ContractError("no negatives: all features share one label");
  for (const auto& [label, n] : counts) {
    if (n < 2) throw ContractError("no positive partner for label " + std::to_string(label));
  }

  PairSet set;
  for (std::size_t a = 0; a < labels.size(); ++a) {
    std::vector<std::size_t> negatives;
    for (std::size_t n = 0; n < labels.size(); ++n)
      if (labels[n] != labels[a]) negatives.push_back(n);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      set.entries.push_back({a, p, negatives});
    }
  }
  return set;
}

std::vector<std::size_t> labels_of(std::span<const LabeledFeature> features) {
  std::vector<std::size_t> labels;
  labels.reserve(features.size());
  for (const auto& f : features) labels.push_back(f.label);
  return labels;
}

PairSet enumerate_pairs(std::span<const LabeledFeature> features) {
  const auto labels = labels_of(features);
  return enumerate_pairs(std::span<const std::size_t>(labels));
}

}  // namespace conform
