#pragma once

#include <cstddef>

#include "conform/rng.hpp"
#include "conform/tape.hpp"
#include "conform/tensor.hpp"

namespace conform {

/// Per-token spatial attention for one timestep: maps[i, j, k] is the weight
/// pixel (i, j) puts on token k. Every pixel's weights sum to one.
struct AttentionMaps {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t l = 0;
  int timestep = 0;
  Tensor maps;  // [h, w, l]
};

/// Token embeddings standing in for a text encoder's output: l unit rows of width d_text.
struct TextEmbedding {
  Tensor tokens;  // [l, d_text]

  std::size_t length() const { return tokens.shape()[0]; }
  std::size_t width() const { return tokens.shape()[1]; }

  static TextEmbedding random(std::size_t l, std::size_t d_text, Rng& rng);
};

/// Query projection for latent pixels and key projection for text tokens.
struct ProjectionWeights {
  Tensor query;  // [c, d]
  Tensor key;    // [d_text, d]

  std::size_t inner_dim() const { return query.shape()[1]; }
};

/// Softmax(Q K^T / sqrt(d)) with queries from latent pixels and keys from
/// tokens, normalized over tokens. `z` is [h, w, c]; the result is [h, w, l]
/// and differentiable with respect to `z`.
Var cross_attention(Var z, const TextEmbedding& embedding, const ProjectionWeights& weights);

AttentionMaps cross_attention(const Tensor& z, const TextEmbedding& embedding, const ProjectionWeights& weights,
                              int timestep = 0);

/// maps[:, :, j] as an [h, w] tensor. Throws IndexError when j >= l.
Var token_map(Var maps, std::size_t j);
Tensor token_map(const AttentionMaps& maps, std::size_t j);

/// Wraps a recorded [h, w, l] value.
AttentionMaps to_attention_maps(const Tensor& maps, int timestep);

}  // namespace conform
