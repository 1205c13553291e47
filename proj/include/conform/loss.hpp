#pragma once

#include <optional>
#include <span>

#include "conform/attention.hpp"
#include "conform/pairing.hpp"
#include "conform/tape.hpp"

namespace conform {

struct LossConfig {
  double tau = 0.5;

  /// Throws ConfigError unless tau > 0.
  void validate() const;
};

/// u.v / (|u||v|). Throws DegenerateInputError on a zero vector.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// -log softmax(sims / tau)[0], where sims[0] is the positive similarity and
/// the rest are negatives. Evaluated as logsumexp(sims / tau) - sims[0] / tau.
Var infonce_from_similarities(Var sims, const LossConfig& cfg);

/// InfoNCE for one anchor against one positive and all of its negatives.
/// Throws ContractError when `negatives` is empty.
Var infonce(Var anchor, Var positive, std::span<const Var> negatives, const LossConfig& cfg);
double infonce(double positive_sim, std::span<const double> negative_sims, const LossConfig& cfg);

/// Mean InfoNCE over every entry of `pairs`.
Var contrastive_loss(std::span<const LabeledFeature> features, const PairSet& pairs, const LossConfig& cfg);

/// Average InfoNCE over all ordered positive pairs formed from the grouped
/// tokens of `current` and, when given, the detached `previous` maps.
Var conform_loss(Var current, const std::optional<AttentionMaps>& previous, const TokenGroups& groups,
                 const LossConfig& cfg);
double conform_loss(const AttentionMaps& current, const std::optional<AttentionMaps>& previous,
                    const TokenGroups& groups, const LossConfig& cfg);

}  // namespace conform
