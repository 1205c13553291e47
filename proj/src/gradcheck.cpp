#include "conform/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <quadmath.h>

#include "conform/errors.hpp"
#include "conform/metrics.hpp"

namespace conform {

namespace {

using Quad = __float128;

Quad qexp(Quad x) { return expq(x); }
Quad qlog(Quad x) { return logq(x); }
Quad qsqrt(Quad x) { return sqrtq(x); }

// Quad-precision mirror of the attention + contrastive loss path, written as
// plain loops. A latent coordinate only moves one pixel's attention row, so
// perturbed evaluations patch that row into cached dot products instead of
// recomputing every map.
class ReferenceLoss {
 public:
  ReferenceLoss(const ToyModel& model, std::span<const double> z, const std::optional<AttentionMaps>& previous,
                const TokenGroups& groups, double tau)
      : s_(model.shape), wq_(model.attention.query), tau_(tau), z_(z.begin(), z.end()) {
    if (z.size() != s_.h * s_.w * s_.c) throw DimensionError("reference loss: latent size mismatch");
    const Tensor& wk = model.attention.key;
    const Tensor& e = model.embedding.tokens;
    keys_.assign(s_.l, std::vector<Quad>(s_.d, 0));
    for (std::size_t j = 0; j < s_.l; ++j)
      for (std::size_t a = 0; a < s_.d; ++a)
        for (std::size_t b = 0; b < s_.d_text; ++b) keys_[j][a] += Quad(e.at(j, b)) * Quad(wk.at(b, a));

    const std::size_t pixels = s_.h * s_.w;
    rows_.resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) rows_[p] = attention_row(p, z_);

    for (std::size_t g = 0; g < groups.size(); ++g) {
      std::vector<std::size_t> tokens{groups[g].subject};
      tokens.insert(tokens.end(), groups[g].attributes.begin(), groups[g].attributes.end());
      for (std::size_t t : tokens) {
        features_.push_back({t, false, {}});
        labels_.push_back(g);
        if (previous) {
          std::vector<Quad> prev(pixels);
          for (std::size_t p = 0; p < pixels; ++p) prev[p] = previous->maps[p * previous->l + t];
          features_.push_back({t, true, std::move(prev)});
          labels_.push_back(g);
        }
      }
    }
    const std::size_t n = features_.size();
    dots_.assign(n * n, 0);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < pixels; ++p) dots_[a * n + b] += at(a, p, rows_[p]) * at(b, p, rows_[p]);
  }

  Quad value() const { return loss(dots_); }

  // Loss with latent coordinate k shifted by delta.
  Quad shifted(std::size_t k, Quad delta) const {
    const std::size_t p = k / s_.c;
    std::vector<Quad> zz(z_.begin() + p * s_.c, z_.begin() + (p + 1) * s_.c);
    zz[k % s_.c] += delta;
    const std::vector<Quad> row = local_row(zz);
    const std::size_t n = features_.size();
    std::vector<Quad> dots = dots_;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        dots[a * n + b] += at(a, p, row) * at(b, p, row) - at(a, p, rows_[p]) * at(b, p, rows_[p]);
    return loss(dots);
  }

 private:
  struct Feature {
    std::size_t token;
    bool previous;
    std::vector<Quad> map;
  };

  Quad at(std::size_t f, std::size_t p, const std::vector<Quad>& row) const {
    return features_[f].previous ? features_[f].map[p] : row[features_[f].token];
  }

  std::vector<Quad> attention_row(std::size_t p, const std::vector<Quad>& z) const {
    return local_row(std::vector<Quad>(z.begin() + p * s_.c, z.begin() + (p + 1) * s_.c));
  }

  std::vector<Quad> local_row(const std::vector<Quad>& pixel) const {
    std::vector<Quad> q(s_.d, 0);
    for (std::size_t ch = 0; ch < s_.c; ++ch)
      for (std::size_t a = 0; a < s_.d; ++a) q[a] += pixel[ch] * Quad(wq_.at(ch, a));
    const Quad inv_sqrt_d = 1 / qsqrt(Quad(s_.d));
    std::vector<Quad> row(s_.l);
    Quad mx = -1e300;
    for (std::size_t j = 0; j < s_.l; ++j) {
      Quad score = 0;
      for (std::size_t a = 0; a < s_.d; ++a) score += q[a] * keys_[j][a];
      row[j] = score * inv_sqrt_d;
      if (row[j] > mx) mx = row[j];
    }
    Quad total = 0;
    for (auto& v : row) total += (v = qexp(v - mx));
    for (auto& v : row) v /= total;
    return row;
  }

  Quad loss(const std::vector<Quad>& dots) const {
    const std::size_t n = features_.size();
    auto sim = [&](std::size_t a, std::size_t b) { return dots[a * n + b] / qsqrt(dots[a * n + a] * dots[b * n + b]); };
    Quad total = 0;
    std::size_t count = 0;
    for (std::size_t a = 0; a < n; ++a) {
      Quad negatives = 0;
      for (std::size_t m = 0; m < n; ++m)
        if (labels_[m] != labels_[a]) negatives += qexp(sim(a, m) / tau_);
      for (std::size_t p = 0; p < n; ++p) {
        if (p == a || labels_[p] != labels_[a]) continue;
        const Quad positive = qexp(sim(a, p) / tau_);
        total += -qlog(positive / (positive + negatives));
        ++count;
      }
    }
    if (count == 0) throw ContractError("reference loss: no positive pairs");
    return total / Quad(count);
  }

  ModelShape s_;
  Tensor wq_;
  Quad tau_;
  std::vector<Quad> z_;
  std::vector<std::vector<Quad>> keys_;
  std::vector<std::vector<Quad>> rows_;
  std::vector<Feature> features_;
  std::vector<std::size_t> labels_;
  std::vector<Quad> dots_;
};

}  // namespace

double reference_conform_loss(const ToyModel& model, const Tensor& z, const std::optional<AttentionMaps>& previous,
                              const TokenGroups& groups, double tau) {
  return static_cast<double>(ReferenceLoss(model, z.data(), previous, groups, tau).value());
}

Tensor reference_loss_gradient(const ToyModel& model, const Tensor& z, const std::optional<AttentionMaps>& previous,
                               const TokenGroups& groups, double tau, double h) {
  if (!(h > 0.0)) throw ContractError("finite difference step must be positive");
  const ReferenceLoss f(model, z.data(), previous, groups, tau);
  const Quad step = h;
  Tensor grad(z.shape());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const Quad diff = (f.shifted(k, step) - f.shifted(k, -step)) / (2 * step);
    const double g = static_cast<double>(diff);
    if (!std::isfinite(g)) throw NumericError("finite-difference oracle: non-finite value at coordinate " + std::to_string(k));
    grad[k] = g;
  }
  return grad;
}

bool GradcheckReport::passed() const {
  return std::all_of(points.begin(), points.end(),
                     [this](const GradcheckPoint& p) { return p.max_relative_error < tolerance; });
}

const GradcheckPoint& GradcheckReport::worst() const {
  if (points.empty()) throw ContractError("gradcheck report has no points");
  return *std::max_element(points.begin(), points.end(), [](const auto& a, const auto& b) {
    return a.max_relative_error < b.max_relative_error;
  });
}

GradcheckReport run_gradcheck(const ToyModel& model, const TokenGroups& groups, const GuidanceConfig& cfg,
                              const GradcheckOptions& options) {
  cfg.validate();
  validate_groups(groups, model.shape.l);
  GradcheckReport report;
  report.tolerance = options.tolerance;
  const int t = timestep_for(cfg.total_steps / 2, cfg.total_steps);
  for (std::size_t i = 0; i < options.points; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    const Tensor z = initial_latent(model.shape, seed);
    // Previous maps come from an unrelated latent so cross-step pairs are non-trivial.
    std::optional<AttentionMaps> previous;
    if (cfg.cross_timestep) previous = predict(model, initial_latent(model.shape, ~seed), t + 1).maps;

    Tensor autodiff = loss_gradient(model, z, t, previous, groups, cfg.loss()).grad;
    if (options.perturb_autodiff) options.perturb_autodiff(autodiff);
    const Tensor fd = reference_loss_gradient(model, z, previous, groups, cfg.tau, options.h);
    const RelativeError err = max_relative_error(autodiff, fd);
    report.points.push_back({seed, err.value, err.index, autodiff[err.index], fd[err.index]});
  }
  return report;
}

}  // namespace conform
