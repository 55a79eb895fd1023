// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Brute-force references for the self-reflective pipeline.
//
// Nothing here calls the engine's attention, scoring or selection code. The
// reference transformer below re-derives every block from the numerics
// kernels with materialized per-head attention matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/model.hpp"
#include "selfres/numerics.hpp"
#include "selfres/selfres.hpp"
#include "selfres/vision.hpp"
#include "selfres/workload.hpp"

namespace selfres::oracle {

// Per-head attention logits (n x n, causal mask as -inf) for one layer input.
struct ReferenceAttention {
  std::vector<Matrix> logits;  // one per head
  Matrix output;               // softmax(logits) * V, heads concatenated, before Wo
};

inline ReferenceAttention reference_attention(const Weights& w, const LayerWeights& lw, const Matrix& hidden,
                                              std::span<const int> positions) {
  const ModelConfig& cfg = w.config;
  const std::size_t n = hidden.rows();
  const std::size_t dk = cfg.head_dim;
  const Matrix normed = rms_normalize_rows(hidden, lw.attn_norm, kNormEpsilon);
  const Matrix q = matmul(normed, lw.wq);
  const Matrix k = matmul(normed, lw.wk);
  const Matrix v = matmul(normed, lw.wv);
  const float inv_scale = 1.0f / std::sqrt(static_cast<float>(dk));

  ReferenceAttention out;
  out.output = Matrix(n, cfg.model_dim);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const Matrix qh = apply_rope(column_block(q, h * dk, dk), positions, cfg.rope_base);
    const Matrix kh = apply_rope(column_block(k, h * dk, dk), positions, cfg.rope_base);
    Matrix kt(dk, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < dk; ++c) kt(c, r) = kh(r, c);
    Matrix logits = scale(matmul(qh, kt), inv_scale);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) logits(i, j) = -std::numeric_limits<float>::infinity();
    set_column_block(out.output, h * dk, matmul(row_softmax(logits), column_block(v, h * dk, dk)));
    out.logits.push_back(std::move(logits));
  }
  return out;
}

// Full-sequence reference forward through layers 1 .. upto_layer-1; returns
// the residual entering `upto_layer`.
inline Matrix reference_forward(const Weights& w, Matrix hidden, std::span<const int> positions,
                                std::size_t upto_layer) {
  for (std::size_t l = 1; l < upto_layer; ++l) {
    const LayerWeights& lw = w.layers[l - 1];
    const ReferenceAttention att = reference_attention(w, lw, hidden, positions);
    add_inplace(hidden, matmul(att.output, lw.wo));
    Matrix inner = matmul(rms_normalize_rows(hidden, lw.mlp_norm, kNormEpsilon), lw.w_in);
    for (float& x : inner.data()) x = x / (1.0f + std::exp(-x));
    add_inplace(hidden, matmul(inner, lw.w_out));
  }
  return hidden;
}

// Standard attention at `layer` over the whole path; returns the reflection
// token's pre-softmax logits over the visual keys, averaged over heads.
inline std::vector<float> reference_reflection_logits(const ReflectionPath& path, const Weights& w,
                                                      std::size_t layer) {
  if (layer < 1 || layer > w.config.num_layers) {
    throw ConfigError("reflection layer " + std::to_string(layer) + " outside [1, " +
                      std::to_string(w.config.num_layers) + "]");
  }
  const SegmentedSequence& seq = path.input;
  const Matrix entering = reference_forward(w, seq.embeddings, path.positions, layer);
  const ReferenceAttention att = reference_attention(w, w.layers[layer - 1], entering, path.positions);
  const std::size_t row = seq.reflection_index();
  std::vector<float> out(seq.visual_count, 0.0f);
  for (std::size_t i = 0; i < seq.visual_count; ++i) {
    double acc = 0.0;
    for (const Matrix& head : att.logits) acc += head(row, seq.visual_offset() + i);
    out[i] = static_cast<float>(acc / static_cast<double>(att.logits.size()));
  }
  return out;
}

// Full sort by (score desc, index asc), first K, re-sorted ascending.
inline std::vector<std::size_t> brute_force_topk(const SaliencyTable& table, std::size_t keep) {
  std::vector<std::size_t> order(table.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return table.entries[a].score > table.entries[b].score;
  });
  order.resize(std::min(keep, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

struct BaselineResult {
  std::vector<int> output_ids;
  WorkCounters counters;          // prefill plus decode
  WorkCounters prefill_counters;  // prefill only
  std::size_t prefill_tokens = 0;
};

// Linear sampling of `frames` frames into a single context; no reflection.
inline BaselineResult baseline_run(const SyntheticVideo& video, const Prompt& prompt, const Weights& w,
                                   std::size_t frames, std::size_t max_new_tokens) {
  const VisualTokens visual = encode_and_project(video, sample_frames_uniform(video.spec.num_frames, frames), w);
  const ReflectionPath seq = build_path_sequence(w, prompt, visual, 0);
  KVCache cache(w.config.num_layers);
  BaselineResult res;
  res.prefill_tokens = seq.input.size();
  const Matrix out = forward_range(w, seq.input.embeddings, seq.positions, 1, w.config.num_layers + 1, cache,
                                   res.counters);
  res.prefill_counters = res.counters;
  res.output_ids = greedy_decode(w, output_logits(w, out.row(out.rows() - 1)), cache,
                                 static_cast<int>(seq.input.size()), max_new_tokens, res.counters);
  return res;
}

struct DivergenceRow {
  Segment segment = Segment::System;
  std::size_t position = 0;
  std::size_t path_a = 0;
  std::size_t path_b = 0;
  double l2 = 0.0;
  double cosine = 1.0;
};

struct DivergenceReport {
  std::vector<DivergenceRow> rows;

  double max_l2(Segment s) const {
    double m = 0.0;
    for (const auto& r : rows)
      if (r.segment == s) m = std::max(m, r.l2);
    return m;
  }
};

// Pairwise distances between paths of every system and query token's hidden
// state after the reflection layer.
inline DivergenceReport hidden_divergence(std::span<const ReflectionPath> paths) {
  DivergenceReport report;
  if (paths.size() < 2) return report;
  const SegmentedSequence& seq = paths.front().input;
  for (const auto& p : paths) {
    if (p.hidden_at_layer.rows() != seq.size()) throw ContractError("hidden_divergence needs reflected paths");
  }
  for (std::size_t pos = 0; pos < seq.size(); ++pos) {
    const Segment s = seq.entries[pos].segment;
    if (s == Segment::Visual) continue;
    for (std::size_t a = 0; a < paths.size(); ++a) {
      for (std::size_t b = a + 1; b < paths.size(); ++b) {
        auto x = paths[a].hidden_at_layer.row(pos);
        auto y = paths[b].hidden_at_layer.row(pos);
        double diff = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
          const double dx = static_cast<double>(x[c]) - y[c];
          diff += dx * dx;
          xx += static_cast<double>(x[c]) * x[c];
          yy += static_cast<double>(y[c]) * y[c];
          xy += static_cast<double>(x[c]) * y[c];
        }
        const double cosine = (xx > 0.0 && yy > 0.0) ? xy / std::sqrt(xx * yy) : 1.0;
        report.rows.push_back({s, pos, a, b, std::sqrt(diff), cosine});
      }
    }
  }
  return report;
}

inline void write_csv(std::ostream& os, const DivergenceReport& report) {
  os << "segment,position,path_a,path_b,l2,cosine\n";
  for (const auto& r : report.rows) {
    os << to_string(r.segment) << ',' << r.position << ',' << r.path_a << ',' << r.path_b << ','
       << r.l2 << ',' << r.cosine << '\n';
  }
}

struct CalibrationStep {
  double beta = 0.0;
  double recall = 0.0;
  std::string phase;  // "double" or "bisect"
};

struct CalibrationResult {
  bool success = false;
  double beta = 0.0;
  std::vector<CalibrationStep> trace;
};

struct CalibrationSettings {
  double target_recall = 0.99;
  double initial_beta = 0.5;
  double max_beta = 1024.0;
  std::size_t bisection_steps = 10;
};

// Pooled planted recall of the selection over `seeds` at bias `beta`.
inline double planted_recall_at(const RunRequest& req, const Weights& w, double beta,
                                std::span<const std::uint64_t> seeds) {
  RecallCount pooled;
  for (std::uint64_t seed : seeds) {
    VideoSpec spec = resolve_video(req, w, seed);
    spec.event.bias = static_cast<float>(beta);
    const ReflectionState st = reflect(generate_planted_video(spec), req.prompt, w, req.options);
    pooled += planted_recall(st.table, st.selection, spec.event);
  }
  const auto f = pooled.fraction();
  if (!f) throw ConfigError("no planted event cell is among the sampled frames");
  return *f;
}

// Smallest bias reaching the target recall: doubling from initial_beta until
// the target is met, then bisection between the last miss and first hit.
inline CalibrationResult calibrate_beta(const RunRequest& req, std::span<const std::uint64_t> seeds,
                                        const CalibrationSettings& settings = {}) {
  if (!(settings.target_recall > 0.0 && settings.target_recall <= 1.0)) {
    throw ConfigError("target recall must lie in (0, 1]");
  }
  if (seeds.empty()) throw ConfigError("calibration needs at least one seed");
  const Weights w = init_weights(req.model);
  CalibrationResult res;
  auto eval = [&](double beta, const char* phase) {
    const double r = planted_recall_at(req, w, beta, seeds);
    res.trace.push_back({beta, r, phase});
    return r >= settings.target_recall;
  };
  double lo = 0.0;
  double hi = settings.initial_beta;
  while (!eval(hi, "double")) {
    lo = hi;
    hi *= 2.0;
    if (hi > settings.max_beta) return res;
  }
  for (std::size_t i = 0; i < settings.bisection_steps; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (eval(mid, "bisect")) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  res.success = true;
  res.beta = hi;
  return res;
}

inline void write_csv(std::ostream& os, const CalibrationResult& res) {
  os << "step,phase,beta,recall\n";
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    os << i << ',' << res.trace[i].phase << ',' << res.trace[i].beta << ',' << res.trace[i].recall << '\n';
  }
}

}  // namespace selfres::oracle
