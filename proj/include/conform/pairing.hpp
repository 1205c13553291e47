#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "conform/attention.hpp"
#include "conform/tape.hpp"

namespace conform {

/// A subject token and the attribute tokens bound to it ("red" -> "backpack").
struct TokenGroup {
  std::size_t subject = 0;
  std::vector<std::size_t> attributes;

  friend bool operator==(const TokenGroup&, const TokenGroup&) = default;
};

/// Ordered groups; a group's position is its label.
using TokenGroups = std::vector<TokenGroup>;

/// Throws ConfigError (field "groups") when a token index is >= token_count or
/// appears more than once across all groups.
void validate_groups(const TokenGroups& groups, std::size_t token_count);

enum class FeatureSource { current, previous };

/// One token's flattened attention map tagged with its group label.
/// Previous-timestep features are tape constants (`detached`).
struct LabeledFeature {
  std::size_t label = 0;
  std::size_t token = 0;
  FeatureSource source = FeatureSource::current;
  bool detached = false;
  Var map;  // [h * w]
};

/// For every group and each of its tokens (subject first, then attributes in
/// order) emits the current-timestep feature followed by the previous-timestep
/// feature. Previous features are omitted when `previous` is empty.
std::vector<LabeledFeature> build_features(Var current, const std::optional<AttentionMaps>& previous,
                                           const TokenGroups& groups);

/// An ordered (anchor, positive) pair with the anchor's negatives. Indices refer
/// to the feature list the set was built from.
struct PairEntry {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
};

struct PairSet {
  std::vector<PairEntry> entries;
};

/// Every ordered pair of distinct same-label features; each entry's negatives
/// are all features with a different label, in feature order. Throws
/// ContractError when only one label is present ("no negatives") or some label
/// has a single feature ("no positive partner").
PairSet enumerate_pairs(std::span<const std::size_t> labels);
PairSet enumerate_pairs(std::span<const LabeledFeature> features);

/// True when enumerate_pairs() would succeed for these labels.
bool pairable(std::span<const std::size_t> labels);

std::vector<std::size_t> labels_of(std::span<const LabeledFeature> features);

}  // namespace conform
