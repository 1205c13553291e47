#include "conform/loss.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "conform/errors.hpp"

namespace conform {

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau", "temperature must be a positive finite number");
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine_similarity length mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw DegenerateInputError("cosine similarity of a zero vector");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

Var infonce_from_similarities(Var sims, const LossConfig& cfg) {
  cfg.validate();
  if (sims.value().size() < 2) throw ContractError("infonce needs at least one negative");
  Var logits = scale(sims, 1.0 / cfg.tau);
  return sub(logsumexp(logits), element(logits, 0));
}

Var infonce(Var anchor, Var positive, std::span<const Var> negatives, const LossConfig& cfg) {
  if (negatives.empty()) throw ContractError("infonce needs at least one negative");
  std::vector<Var> sims;
  sims.reserve(negatives.size() + 1);
  sims.push_back(cosine_sim(anchor, positive));
  for (const Var& n : negatives) sims.push_back(cosine_sim(anchor, n));
  return infonce_from_similarities(stack(sims), cfg);
}

double infonce(double positive_sim, std::span<const double> negative_sims, const LossConfig& cfg) {
  cfg.validate();
  if (negative_sims.empty()) throw ContractError("infonce needs at least one negative");
  double mx = positive_sim / cfg.tau;
  for (double s : negative_sims) mx = std::max(mx, s / cfg.tau);
  double z = std::exp(positive_sim / cfg.tau - mx);
  for (double s : negative_sims) z += std::exp(s / cfg.tau - mx);
  return mx + std::log(z) - positive_sim / cfg.tau;
}

Var contrastive_loss(std::span<const LabeledFeature> features, const PairSet& pairs, const LossConfig& cfg) {
  cfg.validate();
  if (pairs.entries.empty()) throw ContractError("contrastive loss over an empty pair set");

  // Each unordered similarity is recorded once and shared by both directions.
  std::map<std::pair<std::size_t, std::size_t>, Var> sim_cache;
  auto sim = [&](std::size_t i, std::size_t j) {
    const auto key = std::minmax(i, j);
    auto it = sim_cache.find(key);
    if (it == sim_cache.end()) {
      it = sim_cache.emplace(key, cosine_sim(features[key.first].map, features[key.second].map)).first;
    }
    return it->second;
  };

  std::vector<Var> pair_losses;
  pair_losses.reserve(pairs.entries.size());
  std::vector<Var> sims;
  for (const PairEntry& e : pairs.entries) {
    if (e.negatives.empty()) throw ContractError("infonce needs at least one negative");
    sims.clear();
    sims.push_back(sim(e.anchor, e.positive));
    for (std::size_t n : e.negatives) sims.push_back(sim(e.anchor, n));
    pair_losses.push_back(infonce_from_similarities(stack(sims), cfg));
  }
  return mean(stack(pair_losses));
}

Var conform_loss(Var current, const std::optional<AttentionMaps>& previous, const TokenGroups& groups,
                 const LossConfig& cfg) {
  const auto features = build_features(current, previous, groups);
  return contrastive_loss(features, enumerate_pairs(features), cfg);
}

double conform_loss(const AttentionMaps& current, const std::optional<AttentionMaps>& previous,
                    const TokenGroups& groups, const LossConfig& cfg) {
  Tape tape;
  return conform_loss(tape.constant(current.maps), previous, groups, cfg).value().item();
}

}  // namespace conform
