// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// A small pre-norm decoder-only transformer with ranged forward passes.
//
// Layers are 1-based. forward_range(from, to) runs layers from .. to-1 and
// returns the residual stream entering layer `to`; to = L+1 means "after the
// last block". Keys are cached *unrotated* together with their position, and
// rotary encoding is applied at attention time, so a cache can be re-labelled
// with new positions without recomputing any projection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/numerics.hpp"

namespace selfres {

inline constexpr float kNormEpsilon = 1e-5f;
inline constexpr std::size_t kMlpExpansion = 2;

struct ModelConfig {
  std::size_t num_layers = 8;
  std::size_t num_heads = 4;
  std::size_t model_dim = 32;
  std::size_t head_dim = 8;
  std::size_t vocab_size = 64;
  std::size_t vision_dim = 32;
  std::size_t default_context = 4096;  // token capacity of one reflection path
  std::size_t reflection_layer = 5;    // 1-based
  double rope_base = 10000.0;
  double weight_scale = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_layers == 0 || num_heads == 0 || model_dim == 0 || head_dim == 0 || vocab_size == 0 ||
        vision_dim == 0 || default_context == 0) {
      throw ConfigError("model config counts must be positive");
    }
    if (model_dim != num_heads * head_dim) {
      throw ConfigError("model_dim " + std::to_string(model_dim) + " != num_heads * head_dim (" +
                        std::to_string(num_heads * head_dim) + ")");
    }
    if (head_dim % 2 != 0) throw ConfigError("head_dim must be even for rotary encoding");
    if (reflection_layer < 1 || reflection_layer > num_layers) {
      throw ConfigError("reflection_layer " + std::to_string(reflection_layer) +
                        " outside [1, " + std::to_string(num_layers) + "]");
    }
    if (!(rope_base > 0.0) || !(weight_scale >= 0.0)) {
      throw ConfigError("rope_base must be > 0 and weight_scale >= 0");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  std::vector<float> attn_norm;
  Matrix wq, wk, wv, wo;
  std::vector<float> mlp_norm;
  Matrix w_in, w_out;
};

struct Weights {
  ModelConfig config;
  Matrix embedding;          // vocab x d
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;
  Matrix unembedding;        // d x vocab
  Matrix vision_projection;  // d_V x d

  // Hash over every parameter, in a fixed traversal order.
  std::uint64_t checksum() const {
    std::uint64_t h = fnv1a(embedding.data());
    for (const auto& l : layers) {
      for (const Matrix* m : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w_in, &l.w_out}) h = fnv1a(m->data(), h);
      h = fnv1a(l.attn_norm, h);
      h = fnv1a(l.mlp_norm, h);
    }
    h = fnv1a(final_norm, h);
    h = fnv1a(unembedding.data(), h);
    return fnv1a(vision_projection.data(), h);
  }
};

namespace detail {

inline Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  Matrix m(rows, cols);
  for (float& v : m.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return m;
}

}  // namespace detail

// Block projections (Q, K, V, O, MLP) are uniform(-weight_scale, weight_scale),
// so weight_scale = 0 turns every block into the identity on the residual
// stream. Token embeddings, unembedding and the vision projection are unit
// scale and independent of weight_scale.
inline Weights init_weights(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.model_dim;
  const std::size_t ff = kMlpExpansion * d;
  Rng rng(config.seed);
  Weights w;
  w.config = config;
  w.embedding = detail::uniform_matrix(rng, config.vocab_size, d, 1.0);
  w.layers.resize(config.num_layers);
  for (auto& layer : w.layers) {
    layer.attn_norm.assign(d, 1.0f);
    layer.mlp_norm.assign(d, 1.0f);
    layer.wq = detail::uniform_matrix(rng, d, d, config.weight_scale);
    layer.wk = detail::uniform_matrix(rng, d, d, config.weight_scale);
    layer.wv = detail::uniform_matrix(rng, d, d, config.weight_scale);
    layer.wo = detail::uniform_matrix(rng, d, d, config.weight_scale);
    layer.w_in = detail::uniform_matrix(rng, d, ff, config.weight_scale);
    layer.w_out = detail::uniform_matrix(rng, ff, d, config.weight_scale);
  }
  w.final_norm.assign(d, 1.0f);
  w.unembedding = detail::uniform_matrix(rng, d, config.vocab_size, 1.0 / std::sqrt(static_cast<double>(d)));
  w.vision_projection = detail::uniform_matrix(rng, config.vision_dim, d,
                                               std::sqrt(3.0 / static_cast<double>(config.vision_dim)));
  return w;
}

struct LayerCache {
  Matrix keys;    // unrotated, n x d
  Matrix values;  // n x d
  std::vector<int> positions;

  std::size_t size() const noexcept { return positions.size(); }
  std::size_t bytes() const noexcept {
    return keys.bytes() + values.bytes() + positions.size() * sizeof(int);
  }
};

struct KVCache {
  std::vector<LayerCache> layers;

  KVCache() = default;
  explicit KVCache(std::size_t num_layers) : layers(num_layers) {}

  std::size_t bytes() const noexcept {
    std::size_t total = 0;
    for (const auto& l : layers) total += l.bytes();
    return total;
  }
};

// Deterministic work and memory counters. Memory is modelled, not measured:
// `resident_bytes` is what the current execution holds (caches, retained
// hidden states) and each kernel reports its transient buffers through
// observe().
struct WorkCounters {
  std::uint64_t attention_macs = 0;
  std::uint64_t layer_invocations = 0;
  std::uint64_t sra_macs = 0;
  std::uint64_t peak_live_activation_bytes = 0;
  std::uint64_t resident_bytes = 0;

  void observe(std::uint64_t transient_bytes) {
    peak_live_activation_bytes = std::max(peak_live_activation_bytes, resident_bytes + transient_bytes);
  }
  void hold(std::uint64_t bytes) {
    resident_bytes += bytes;
    observe(0);
  }
  void release(std::uint64_t bytes) { resident_bytes -= std::min(bytes, resident_bytes); }

  // Sums the work counters of `other`; memory is merged by the caller since
  // it depends on whether the executions overlapped.
  void add_work(const WorkCounters& other) {
    attention_macs += other.attention_macs;
    layer_invocations += other.layer_invocations;
    sra_macs += other.sra_macs;
  }
};

inline Matrix embed_tokens(const Weights& w, std::span<const int> ids) {
  Matrix out(ids.size(), w.config.model_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= w.config.vocab_size) {
      throw RangeError("token id " + std::to_string(ids[i]) + " outside vocabulary");
    }
    std::copy_n(w.embedding.row(static_cast<std::size_t>(ids[i])).begin(), w.config.model_dim,
                out.row(i).begin());
  }
  return out;
}

// Query, key and value projections of one layer, before rotary encoding.
struct Projections {
  Matrix queries;
  Matrix keys;
  Matrix values;
};

inline Projections project_qkv(const LayerWeights& layer, const Matrix& hidden) {
  const Matrix normed = rms_normalize_rows(hidden, layer.attn_norm, kNormEpsilon);
  return {matmul(normed, layer.wq), matmul(normed, layer.wk), matmul(normed, layer.wv)};
}

namespace detail {

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

// One block. Appends this call's keys and values to `lc` and attends over the
// whole cache with a causal mask.
inline void run_block(const Weights& w, const LayerWeights& layer, Matrix& hidden,
                      std::span<const int> positions, LayerCache& lc, WorkCounters& counters) {
  const ModelConfig& cfg = w.config;
  const std::size_t n = hidden.rows();
  const std::size_t d = cfg.model_dim;
  const std::size_t dk = cfg.head_dim;
  const std::size_t cached = lc.size();
  const std::size_t total = cached + n;

  Projections p = project_qkv(layer, hidden);
  lc.keys.append_rows(p.keys);
  lc.values.append_rows(p.values);
  lc.positions.insert(lc.positions.end(), positions.begin(), positions.end());
  counters.hold(2 * n * d * sizeof(float) + n * sizeof(int));

  const Matrix q_rot = apply_rope_heads(p.queries, positions, cfg.num_heads, cfg.rope_base);
  const Matrix k_rot = apply_rope_heads(lc.keys, lc.positions, cfg.num_heads, cfg.rope_base);
  const float denom = std::sqrt(static_cast<float>(dk));

  // residual + normed + q/k/v + attention output, plus one head's logits and
  // probabilities and the rotated key copy.
  counters.observe(6 * hidden.bytes() + 2 * n * total * sizeof(float) + k_rot.bytes());

  Matrix attended(n, d);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const std::size_t off = h * dk;
    Matrix logits(n, total);
    for (std::size_t i = 0; i < n; ++i) {
      auto qi = q_rot.row(i).subspan(off, dk);
      for (std::size_t j = 0; j < total; ++j) {
        logits(i, j) = dot(qi, k_rot.row(j).subspan(off, dk)) / denom;
        if (j > cached + i) logits(i, j) = -std::numeric_limits<float>::infinity();
      }
    }
    const Matrix probs = row_softmax(logits);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < dk; ++c) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < total; ++j) acc += probs(i, j) * lc.values(j, off + c);
        attended(i, off + c) = acc;
      }
    }
  }
  // QK^T and AV, each n * total * d multiply-accumulates over all heads.
  counters.attention_macs += 2ULL * n * total * d;
  counters.layer_invocations += 1;

  add_inplace(hidden, matmul(attended, layer.wo));

  Matrix inner = matmul(rms_normalize_rows(hidden, layer.mlp_norm, kNormEpsilon), layer.w_in);
  for (float& v : inner.data()) v = silu(v);
  add_inplace(hidden, matmul(inner, layer.w_out));
}

}  // namespace detail

// Runs layers from_layer .. to_layer-1 (1-based, half-open) and returns the
// hidden state entering to_layer. The cache must have one LayerCache per
// layer; each run layer gets this call's keys appended.
inline Matrix forward_range(const Weights& w, Matrix hidden, std::span<const int> positions,
                            std::size_t from_layer, std::size_t to_layer, KVCache& cache,
                            WorkCounters& counters) {
  const std::size_t L = w.config.num_layers;
  if (from_layer < 1 || from_layer > to_layer || to_layer > L + 1) {
    throw ConfigError("layer range [" + std::to_string(from_layer) + ", " + std::to_string(to_layer) +
                      ") invalid for " + std::to_string(L) + " layers");
  }
  if (positions.size() != hidden.rows()) {
    throw DimensionError("positions length " + std::to_string(positions.size()) + " != rows " +
                         std::to_string(hidden.rows()));
  }
  if (hidden.cols() != w.config.model_dim) throw DimensionError("hidden width != model_dim");
  if (cache.layers.size() != L) cache.layers.resize(L);
  for (std::size_t layer = from_layer; layer < to_layer; ++layer) {
    detail::run_block(w, w.layers[layer - 1], hidden, positions, cache.layers[layer - 1], counters);
  }
  return hidden;
}

// Final norm and unembedding of one residual row.
inline std::vector<float> output_logits(const Weights& w, std::span<const float> hidden_row) {
  const auto normed = rms_normalize(hidden_row, w.final_norm, kNormEpsilon);
  std::vector<float> out(w.config.vocab_size, 0.0f);
  for (std::size_t v = 0; v < out.size(); ++v) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < normed.size(); ++c) acc += normed[c] * w.unembedding(c, v);
    out[v] = acc;
  }
  return out;
}

// Lowest index among maximal entries.
inline int argmax(std::span<const float> logits) {
  if (logits.empty()) throw DimensionError("argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

// Greedy continuation after a prefill. `first_logits` are the logits of the
// last prefill token; each emitted token is fed back at the next position.
inline std::vector<int> greedy_decode(const Weights& w, std::span<const float> first_logits,
                                      KVCache& cache, int next_position, std::size_t max_new,
                                      WorkCounters& counters) {
  std::vector<int> out;
  if (max_new == 0) return out;
  out.reserve(max_new);
  out.push_back(argmax(first_logits));
  while (out.size() < max_new) {
    const int token = out.back();
    const int pos = next_position++;
    Matrix h = forward_range(w, embed_tokens(w, std::span<const int>(&token, 1)),
                             std::span<const int>(&pos, 1), 1, w.config.num_layers + 1, cache, counters);
    out.push_back(argmax(output_logits(w, h.row(0))));
  }
  return out;
}

}  // namespace selfres
