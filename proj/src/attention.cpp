#include "conform/attention.hpp"

#include <cmath>
#include <string>

#include "conform/errors.hpp"

namespace conform {

TextEmbedding TextEmbedding::random(std::size_t l, std::size_t d_text, Rng& rng) {
  Tensor tokens = rng.normal_tensor({l, d_text});
  for (std::size_t i = 0; i < l; ++i) {
    double n = 0.0;
    for (std::size_t k = 0; k < d_text; ++k) n += tokens.at(i, k) * tokens.at(i, k);
    n = std::sqrt(n);
    for (std::size_t k = 0; k < d_text; ++k) tokens.at(i, k) /= n;
  }
  return TextEmbedding{std::move(tokens)};
}

Var cross_attention(Var z, const TextEmbedding& embedding, const ProjectionWeights& weights) {
  const Shape& zs = z.shape();
  if (zs.size() != 3) throw DimensionError("latent must be [h, w, c], got " + to_string(zs));
  const std::size_t h = zs[0], w = zs[1], c = zs[2];
  if (weights.query.rank() != 2 || weights.query.shape()[0] != c) {
    throw DimensionError("query projection " + to_string(weights.query.shape()) + " does not accept latent " +
                         to_string(zs));
  }
  if (weights.key.rank() != 2 || weights.key.shape()[0] != embedding.width() ||
      weights.key.shape()[1] != weights.inner_dim()) {
    throw DimensionError("key projection " + to_string(weights.key.shape()) + " incompatible with embedding " +
                         to_string(embedding.tokens.shape()) + " and query " + to_string(weights.query.shape()));
  }
  Tape& tape = z.tape();
  const std::size_t l = embedding.length();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(weights.inner_dim()));

  Var pixels = reshape(z, {h * w, c});
  Var queries = matmul(pixels, tape.constant(weights.query));
  Var keys_t = tape.constant(transpose(matmul(embedding.tokens, weights.key)));
  Var scores = scale(matmul(queries, keys_t), inv_sqrt_d);
  return reshape(softmax_rows(scores), {h, w, l});
}

AttentionMaps cross_attention(const Tensor& z, const TextEmbedding& embedding, const ProjectionWeights& weights,
                              int timestep) {
  Tape tape;
  Var maps = cross_attention(tape.constant(z), embedding, weights);
  return to_attention_maps(maps.value(), timestep);
}

Var token_map(Var maps, std::size_t j) {
  if (maps.shape().size() != 3) throw DimensionError("attention maps must be [h, w, l], got " + to_string(maps.shape()));
  return slice_last(maps, j);
}

Tensor token_map(const AttentionMaps& maps, std::size_t j) {
  if (j >= maps.l) {
    throw IndexError("token " + std::to_string(j) + " out of range for " + std::to_string(maps.l) + " tokens");
  }
  Tensor out({maps.h, maps.w});
  for (std::size_t i = 0; i < maps.h; ++i)
    for (std::size_t k = 0; k < maps.w; ++k) out.at(i, k) = maps.maps.at(i, k, j);
  return out;
}

AttentionMaps to_attention_maps(const Tensor& maps, int timestep) {
  if (maps.rank() != 3) throw DimensionError("attention maps must be [h, w, l], got " + to_string(maps.shape()));
  return AttentionMaps{maps.shape()[0], maps.shape()[1], maps.shape()[2], timestep, maps};
}

}  // namespace conform
