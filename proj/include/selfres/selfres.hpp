// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Self-reflective sampling over a long frame sequence.
//
//   sample T frames -> project -> split into R = T/S paths
//   each path: [system | its visual tokens | query], prefilled through the
//   reflection layer l; the last token's layer-l attention logits over the
//   path's visual keys (head-averaged, no softmax) score every visual token
//   -> keep the K best over all paths, restored to temporal order
//   -> converge: Regular rebuilds the input sequence and restarts at layer 1,
//      Smooth gathers post-layer-l hidden states and resumes at layer l+1
//   -> greedy decode.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/model.hpp"
#include "selfres/numerics.hpp"
#include "selfres/vision.hpp"

namespace selfres {

enum class Segment : std::uint8_t { System, Visual, Query };
enum class InferenceMode : std::uint8_t { Regular, Smooth };
enum class PositionStrategy : std::uint8_t {
  Reassigned,
  OriginalDuplicated,
  OriginalPathIncremented,
  SinglePosition,
};
enum class ExecMode : std::uint8_t { Batch, Sequential };

inline std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::System: return "system";
    case Segment::Visual: return "visual";
    case Segment::Query: return "query";
  }
  return "?";
}
inline std::string_view to_string(InferenceMode m) { return m == InferenceMode::Regular ? "regular" : "smooth"; }
inline std::string_view to_string(ExecMode e) { return e == ExecMode::Batch ? "batch" : "seq"; }
inline std::string_view to_string(PositionStrategy p) {
  switch (p) {
    case PositionStrategy::Reassigned: return "reassigned";
    case PositionStrategy::OriginalDuplicated: return "dup";
    case PositionStrategy::OriginalPathIncremented: return "inc";
    case PositionStrategy::SinglePosition: return "single";
  }
  return "?";
}

inline InferenceMode parse_mode(std::string_view s) {
  if (s == "regular") return InferenceMode::Regular;
  if (s == "smooth") return InferenceMode::Smooth;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected regular|smooth)");
}
inline ExecMode parse_exec(std::string_view s) {
  if (s == "batch") return ExecMode::Batch;
  if (s == "seq" || s == "sequential") return ExecMode::Sequential;
  throw ConfigError("unknown exec '" + std::string(s) + "' (expected batch|seq)");
}
inline PositionStrategy parse_position_strategy(std::string_view s) {
  if (s == "reassigned") return PositionStrategy::Reassigned;
  if (s == "dup") return PositionStrategy::OriginalDuplicated;
  if (s == "inc") return PositionStrategy::OriginalPathIncremented;
  if (s == "single") return PositionStrategy::SinglePosition;
  throw ConfigError("unknown position strategy '" + std::string(s) +
                    "' (expected reassigned|dup|inc|single)");
}

struct Prompt {
  std::vector<int> system;
  std::vector<int> query;
};

struct TokenEntry {
  Segment segment = Segment::System;
  int token_id = -1;  // -1 for visual tokens
  std::size_t path = 0;
  VisualLabel label{};           // visual only
  std::size_t local_visual = 0;  // visual only: index inside the path, frame-major
};

// [system | visual | query]; the last entry is the reflection token.
struct SegmentedSequence {
  Matrix embeddings;
  std::vector<TokenEntry> entries;
  std::size_t system_count = 0;
  std::size_t visual_count = 0;
  std::size_t query_count = 0;

  std::size_t size() const noexcept { return entries.size(); }
  std::size_t reflection_index() const noexcept { return entries.size() - 1; }
  std::size_t visual_offset() const noexcept { return system_count; }
  std::size_t query_offset() const noexcept { return system_count + visual_count; }
};

// Path i receives frames [i*S, (i+1)*S) of the T sampled frames.
inline std::vector<VisualTokens> split_paths(const VisualTokens& visual, std::size_t total_frames,
                                             std::size_t frames_per_path) {
  if (frames_per_path == 0 || total_frames == 0 || total_frames % frames_per_path != 0) {
    throw DivisibilityError("T = " + std::to_string(total_frames) + " is not a multiple of S = " +
                            std::to_string(frames_per_path));
  }
  if (visual.labels.size() % total_frames != 0 || visual.tokens.rows() != visual.labels.size()) {
    throw DimensionError("visual token count is not a whole number of frames");
  }
  const std::size_t per_frame = visual.labels.size() / total_frames;
  const std::size_t per_path = per_frame * frames_per_path;
  const std::size_t paths = total_frames / frames_per_path;
  std::vector<VisualTokens> out(paths);
  for (std::size_t r = 0; r < paths; ++r) {
    out[r].tokens = Matrix(0, visual.tokens.cols());
    for (std::size_t i = r * per_path; i < (r + 1) * per_path; ++i) {
      out[r].tokens.append_row(visual.tokens.row(i));
      out[r].labels.push_back(visual.labels[i]);
    }
  }
  return out;
}

struct ReflectionPath {
  std::size_t index = 0;
  SegmentedSequence input;
  std::vector<int> positions;  // path-local, 0 .. N_r-1
  std::size_t reflection_layer = 0;
  Matrix hidden_at_layer;      // residual stream after the reflection layer
  KVCache cache;               // layers 1 .. reflection_layer
  std::vector<float> scores;   // one per visual token
  WorkCounters counters;
};

inline ReflectionPath build_path_sequence(const Weights& w, const Prompt& prompt, const VisualTokens& visual,
                                          std::size_t path_index) {
  if (prompt.query.empty()) throw ContractError("query must be nonempty: it carries the reflection token");
  if (visual.tokens.cols() != w.config.model_dim) throw DimensionError("visual tokens not in model space");
  ReflectionPath path;
  path.index = path_index;
  SegmentedSequence& seq = path.input;
  seq.system_count = prompt.system.size();
  seq.visual_count = visual.labels.size();
  seq.query_count = prompt.query.size();
  seq.embeddings = embed_tokens(w, prompt.system);
  if (seq.embeddings.rows() == 0) seq.embeddings = Matrix(0, w.config.model_dim);
  for (int id : prompt.system) seq.entries.push_back({Segment::System, id, path_index, {}, 0});
  seq.embeddings.append_rows(visual.tokens);
  for (std::size_t i = 0; i < visual.labels.size(); ++i) {
    seq.entries.push_back({Segment::Visual, -1, path_index, visual.labels[i], i});
  }
  seq.embeddings.append_rows(embed_tokens(w, prompt.query));
  for (int id : prompt.query) seq.entries.push_back({Segment::Query, id, path_index, {}, 0});
  path.positions.resize(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) path.positions[i] = static_cast<int>(i);
  path.cache = KVCache(w.config.num_layers);
  return path;
}

// Self-reflective attention at `layer` for one path: the reflection token's
// query against the visual tokens' keys, per head q.k / sqrt(d_k), averaged
// over heads. `hidden` is the residual stream entering `layer`.
inline std::vector<float> sra_scores(const Weights& w, std::size_t layer, const Matrix& hidden,
                                     std::span<const int> positions, std::size_t reflection_row,
                                     std::size_t visual_first, std::size_t visual_count,
                                     WorkCounters& counters) {
  const ModelConfig& cfg = w.config;
  if (layer < 1 || layer > cfg.num_layers) {
    throw ConfigError("reflection layer " + std::to_string(layer) + " outside [1, " +
                      std::to_string(cfg.num_layers) + "]");
  }
  if (visual_first + visual_count > hidden.rows() || reflection_row >= hidden.rows()) {
    throw RangeError("SRA rows outside the hidden state");
  }
  const LayerWeights& lw = w.layers[layer - 1];
  const std::size_t dk = cfg.head_dim;

  Matrix reflection(1, cfg.model_dim);
  std::copy_n(hidden.row(reflection_row).begin(), cfg.model_dim, reflection.row(0).begin());
  Matrix visual(visual_count, cfg.model_dim);
  for (std::size_t i = 0; i < visual_count; ++i) {
    std::copy_n(hidden.row(visual_first + i).begin(), cfg.model_dim, visual.row(i).begin());
  }
  const int q_pos = positions[reflection_row];
  const Matrix q = apply_rope_heads(
      matmul(rms_normalize_rows(reflection, lw.attn_norm, kNormEpsilon), lw.wq),
      std::span<const int>(&q_pos, 1), cfg.num_heads, cfg.rope_base);
  const Matrix keys = apply_rope_heads(matmul(rms_normalize_rows(visual, lw.attn_norm, kNormEpsilon), lw.wk),
                                       positions.subspan(visual_first, visual_count), cfg.num_heads,
                                       cfg.rope_base);
  counters.observe(2 * visual.bytes() + q.bytes() + visual_count * sizeof(float));

  const float denom = std::sqrt(static_cast<float>(dk));
  std::vector<float> scores(visual_count);
  for (std::size_t i = 0; i < visual_count; ++i) {
    float acc = 0.0f;
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      acc += dot(q.row(0).subspan(h * dk, dk), keys.row(i).subspan(h * dk, dk)) / denom;
    }
    scores[i] = acc / static_cast<float>(cfg.num_heads);
  }
  counters.sra_macs += static_cast<std::uint64_t>(visual_count) * dk * cfg.num_heads;
  return scores;
}

// Prefill through `layer`, scoring the visual tokens on the way in.
inline void reflect_path(const Weights& w, ReflectionPath& path, std::size_t layer) {
  const ModelConfig& cfg = w.config;
  if (layer < 1 || layer > cfg.num_layers) {
    throw ConfigError("reflection layer " + std::to_string(layer) + " outside [1, " +
                      std::to_string(cfg.num_layers) + "]");
  }
  path.reflection_layer = layer;
  path.cache = KVCache(cfg.num_layers);
  path.counters = {};
  const SegmentedSequence& seq = path.input;
  Matrix entering = forward_range(w, seq.embeddings, path.positions, 1, layer, path.cache, path.counters);
  path.scores = sra_scores(w, layer, entering, path.positions, seq.reflection_index(), seq.visual_offset(),
                           seq.visual_count, path.counters);
  path.hidden_at_layer =
      forward_range(w, std::move(entering), path.positions, layer, layer + 1, path.cache, path.counters);
  path.counters.hold(path.hidden_at_layer.bytes());
}

struct SaliencyEntry {
  std::size_t path = 0;
  VisualLabel label{};
  std::size_t flat_index = 0;  // path * N_V + local index
  float score = 0.0f;
};

struct SaliencyTable {
  std::size_t num_paths = 0;
  std::size_t visual_per_path = 0;
  std::vector<SaliencyEntry> entries;  // entries[i].flat_index == i
};

inline SaliencyTable make_saliency_table(std::span<const ReflectionPath> paths) {
  SaliencyTable table;
  table.num_paths = paths.size();
  table.visual_per_path = paths.empty() ? 0 : paths.front().input.visual_count;
  for (const auto& p : paths) {
    if (p.input.visual_count != table.visual_per_path || p.scores.size() != table.visual_per_path) {
      throw ContractError("paths disagree on visual token count or were not reflected");
    }
    const std::size_t off = p.input.visual_offset();
    for (std::size_t i = 0; i < p.scores.size(); ++i) {
      if (!std::isfinite(p.scores[i])) throw ContractError("non-finite saliency score");
      table.entries.push_back(
          {p.index, p.input.entries[off + i].label, table.entries.size(), p.scores[i]});
    }
  }
  return table;
}

namespace detail {

// Runs fn(i) for every i. Batch runs them on separate threads; errors are
// rethrown in path order either way.
inline void for_each_path(std::size_t count, ExecMode exec, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (exec == ExecMode::Batch && count > 1) {
    std::vector<std::jthread> workers;
    workers.reserve(count);
    for (std::size_t i = 0; i < count; ++i) workers.emplace_back(guarded, i);
  } else {
    for (std::size_t i = 0; i < count; ++i) guarded(i);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

// Prefills every path through `layer` and collects the saliency table.
inline SaliencyTable self_reflect(std::vector<ReflectionPath>& paths, const Weights& w, std::size_t layer,
                                  ExecMode exec = ExecMode::Sequential) {
  if (layer < 1 || layer > w.config.num_layers) {
    throw ConfigError("reflection layer " + std::to_string(layer) + " outside [1, " +
                      std::to_string(w.config.num_layers) + "]");
  }
  detail::for_each_path(paths.size(), exec, [&](std::size_t i) { reflect_path(w, paths[i], layer); });
  return make_saliency_table(paths);
}

struct Selection {
  std::vector<std::size_t> indices;  // flat global indices, ascending
  bool degenerate = false;           // K == 0
  bool clamped = false;              // K exceeded R * N_V
};

// Top-K by score with ties toward the lower flat index, returned ascending.
inline Selection select_salient(const SaliencyTable& table, std::size_t keep) {
  Selection sel;
  const std::size_t n = table.entries.size();
  if (keep > n) {
    keep = n;
    sel.clamped = true;
  }
  if (keep == 0) {
    sel.degenerate = true;
    return sel;
  }
  // "a ranks before b"
  auto better = [&](std::size_t a, std::size_t b) {
    const float sa = table.entries[a].score;
    const float sb = table.entries[b].score;
    return sa > sb || (sa == sb && a < b);
  };
  // Heap of the current best `keep`, worst on top.
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(better)> heap(better);
  for (std::size_t i = 0; i < n; ++i) {
    if (heap.size() < keep) {
      heap.push(i);
    } else if (better(i, heap.top())) {
      heap.pop();
      heap.push(i);
    }
  }
  sel.indices.reserve(keep);
  while (!heap.empty()) {
    sel.indices.push_back(heap.top());
    heap.pop();
  }
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

struct ConvergencePlan {
  std::vector<std::size_t> selected;  // S_c
  std::size_t keep = 0;
  InferenceMode mode = InferenceMode::Regular;
  PositionStrategy positions = PositionStrategy::Reassigned;
  ExecMode exec = ExecMode::Batch;
};

struct TokenProvenance {
  Segment segment = Segment::System;
  std::size_t path = 0;
  std::size_t original_position = 0;  // path-local
};

// Positions for the converged sequence.
//   Reassigned               0 .. N-1
//   OriginalDuplicated       path-local positions (collide across paths)
//   OriginalPathIncremented  path-local + path * N_r
//   SinglePosition           every visual token at |X_sys|, the rest at their index
inline std::vector<int> assign_positions(std::span<const TokenProvenance> tokens, PositionStrategy strategy,
                                         std::size_t system_count, std::size_t path_length) {
  std::vector<int> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenProvenance& t = tokens[i];
    switch (strategy) {
      case PositionStrategy::Reassigned:
        out[i] = static_cast<int>(i);
        break;
      case PositionStrategy::OriginalDuplicated:
        out[i] = static_cast<int>(t.original_position);
        break;
      case PositionStrategy::OriginalPathIncremented:
        out[i] = static_cast<int>(t.original_position + t.path * path_length);
        break;
      case PositionStrategy::SinglePosition:
        out[i] = static_cast<int>(t.segment == Segment::Visual ? system_count : i);
        break;
      default:
        throw ConfigError("unknown position strategy");
    }
  }
  return out;
}

// The sequence handed to the final inference pass.
struct ConvergedContext {
  Matrix hidden;  // input embeddings (Regular) or post-layer-l states (Smooth)
  std::vector<int> positions;
  std::vector<TokenProvenance> provenance;
  KVCache cache;
  std::size_t start_layer = 1;
};

inline ConvergedContext converge(std::span<const ReflectionPath> paths, const ConvergencePlan& plan,
                                 const Weights& w) {
  if (paths.empty()) throw ContractError("converge needs at least one reflection path");
  const std::size_t nv = paths.front().input.visual_count;
  const std::size_t path_len = paths.front().input.size();
  if (plan.selected.size() != plan.keep) {
    throw ContractError("plan keeps " + std::to_string(plan.keep) + " tokens but selects " +
                        std::to_string(plan.selected.size()));
  }
  for (std::size_t i = 0; i < plan.selected.size(); ++i) {
    if (plan.selected[i] >= paths.size() * nv) throw ContractError("selected index outside the saliency table");
    if (i > 0 && plan.selected[i] <= plan.selected[i - 1]) {
      throw ContractError("selection must be strictly increasing");
    }
  }
  const bool smooth = plan.mode == InferenceMode::Smooth;
  const std::size_t layer = paths.front().reflection_layer;
  for (const auto& p : paths) {
    if (p.input.size() != path_len || p.input.visual_count != nv) {
      throw ContractError("reflection paths have different shapes");
    }
    if (smooth && (p.reflection_layer != layer || p.hidden_at_layer.rows() != path_len)) {
      throw ContractError("smooth convergence requires every path reflected at the same layer");
    }
  }
  if (smooth && layer == 0) throw ContractError("smooth convergence requires reflected paths");

  // Rows to take: (path, row within that path's sequence).
  const ReflectionPath& first = paths.front();
  const SegmentedSequence& seq0 = first.input;
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (std::size_t i = 0; i < seq0.system_count; ++i) rows.emplace_back(0, i);
  for (std::size_t flat : plan.selected) rows.emplace_back(flat / nv, seq0.visual_offset() + flat % nv);
  for (std::size_t i = 0; i < seq0.query_count; ++i) rows.emplace_back(0, seq0.query_offset() + i);

  ConvergedContext ctx;
  ctx.provenance.reserve(rows.size());
  for (auto [p, r] : rows) {
    ctx.provenance.push_back({paths[p].input.entries[r].segment, p, r});
  }
  ctx.positions = assign_positions(ctx.provenance, plan.positions, seq0.system_count, path_len);
  ctx.cache = KVCache(w.config.num_layers);
  ctx.hidden = Matrix(0, w.config.model_dim);
  if (!smooth) {
    for (auto [p, r] : rows) ctx.hidden.append_row(paths[p].input.embeddings.row(r));
    ctx.start_layer = 1;
    return ctx;
  }
  for (auto [p, r] : rows) ctx.hidden.append_row(paths[p].hidden_at_layer.row(r));
  // Layers below and at l keep their key/value projections; only the position
  // labels change, and rotation happens at attention time.
  for (std::size_t l = 0; l < layer; ++l) {
    LayerCache& dst = ctx.cache.layers[l];
    dst.keys = Matrix(0, w.config.model_dim);
    dst.values = Matrix(0, w.config.model_dim);
    for (auto [p, r] : rows) {
      const LayerCache& src = paths[p].cache.layers[l];
      dst.keys.append_row(src.keys.row(r));
      dst.values.append_row(src.values.row(r));
    }
    dst.positions = ctx.positions;
  }
  ctx.start_layer = layer + 1;
  return ctx;
}

// Runs the converged sequence to the end and returns the last token's logits.
inline std::vector<float> final_pass(const Weights& w, ConvergedContext& ctx, WorkCounters& counters) {
  counters.hold(ctx.cache.bytes());
  const Matrix out = forward_range(w, ctx.hidden, ctx.positions, ctx.start_layer, w.config.num_layers + 1,
                                   ctx.cache, counters);
  return output_logits(w, out.row(out.rows() - 1));
}

struct PipelineOptions {
  std::size_t frames = 0;   // T
  std::size_t segment = 0;  // S
  std::size_t reflection_layer = 1;
  std::optional<std::size_t> keep;  // K, defaults to N_V
  InferenceMode mode = InferenceMode::Regular;
  PositionStrategy positions = PositionStrategy::Reassigned;
  ExecMode exec = ExecMode::Batch;
  std::size_t max_new_tokens = 4;
};

// Everything up to and including selection.
struct ReflectionState {
  std::vector<ReflectionPath> paths;
  SaliencyTable table;
  Selection selection;
  std::size_t keep = 0;
  WorkCounters counters;  // work summed over paths; memory per exec mode
  std::vector<std::string> warnings;
};

inline std::size_t path_length(const Prompt& prompt, std::size_t visual_per_path) {
  return prompt.system.size() + visual_per_path + prompt.query.size();
}

inline ReflectionState reflect(const SyntheticVideo& video, const Prompt& prompt, const Weights& w,
                               const PipelineOptions& opt) {
  if (opt.segment == 0 || opt.frames % opt.segment != 0) {
    throw DivisibilityError("T = " + std::to_string(opt.frames) + " is not a multiple of S = " +
                            std::to_string(opt.segment));
  }
  const std::size_t n_r = path_length(prompt, opt.segment * video.spec.patches_per_frame);
  if (n_r > w.config.default_context) {
    throw ConfigError("path length " + std::to_string(n_r) + " exceeds default_context " +
                      std::to_string(w.config.default_context));
  }
  const FrameSample sample = sample_frames_uniform(video.spec.num_frames, opt.frames);
  const VisualTokens visual = encode_and_project(video, sample, w);
  const std::vector<VisualTokens> per_path = split_paths(visual, opt.frames, opt.segment);

  ReflectionState st;
  st.paths.reserve(per_path.size());
  for (std::size_t r = 0; r < per_path.size(); ++r) st.paths.push_back(build_path_sequence(w, prompt, per_path[r], r));
  st.table = self_reflect(st.paths, w, opt.reflection_layer, opt.exec);

  for (const auto& p : st.paths) {
    st.counters.add_work(p.counters);
    const auto peak = p.counters.peak_live_activation_bytes;
    // Batch keeps every path resident at once; sequential keeps one on device
    // and parks finished paths off-device.
    st.counters.peak_live_activation_bytes = opt.exec == ExecMode::Batch
                                                 ? st.counters.peak_live_activation_bytes + peak
                                                 : std::max(st.counters.peak_live_activation_bytes, peak);
  }

  st.keep = opt.keep.value_or(st.table.visual_per_path);
  st.selection = select_salient(st.table, st.keep);
  if (st.selection.clamped) {
    st.warnings.push_back("K = " + std::to_string(st.keep) + " exceeds R*N_V; clamped to " +
                          std::to_string(st.selection.indices.size()));
  }
  if (st.selection.degenerate) st.warnings.push_back("K = 0: empty selection");
  st.keep = st.selection.indices.size();
  return st;
}

struct PipelineResult {
  std::vector<int> output_ids;
  WorkCounters counters;             // whole run
  WorkCounters reflection_counters;  // self-reflective prefill
  WorkCounters final_counters;       // converged pass plus decode
  SaliencyTable table;
  Selection selection;
  ConvergedContext context;  // cache holds the decoded tokens too
  std::vector<std::string> warnings;
};

inline PipelineResult run_pipeline(const SyntheticVideo& video, const Prompt& prompt, const Weights& w,
                                   const PipelineOptions& opt) {
  ReflectionState st = reflect(video, prompt, w, opt);
  ConvergencePlan plan{st.selection.indices, st.keep, opt.mode, opt.positions, opt.exec};

  PipelineResult res;
  res.context = converge(st.paths, plan, w);
  // Path caches and hidden states are released once convergence has copied
  // what it needs.
  st.paths.clear();
  const std::vector<float> logits = final_pass(w, res.context, res.final_counters);
  const int next = *std::max_element(res.context.positions.begin(), res.context.positions.end()) + 1;
  res.output_ids = greedy_decode(w, logits, res.context.cache, next, opt.max_new_tokens, res.final_counters);

  res.reflection_counters = st.counters;
  res.counters.add_work(st.counters);
  res.counters.add_work(res.final_counters);
  res.counters.peak_live_activation_bytes =
      std::max(st.counters.peak_live_activation_bytes, res.final_counters.peak_live_activation_bytes);
  res.table = std::move(st.table);
  res.selection = std::move(st.selection);
  res.warnings = std::move(st.warnings);
  return res;
}

struct RecallCount {
  std::size_t hits = 0;
  std::size_t planted = 0;

  std::optional<double> fraction() const {
    if (planted == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(planted);
  }
  RecallCount& operator+=(const RecallCount& o) {
    hits += o.hits;
    planted += o.planted;
    return *this;
  }
};

// How many planted-event tokens in the table made it into the selection.
inline RecallCount planted_recall(const SaliencyTable& table, const Selection& sel, const EventSpec& event) {
  RecallCount rc;
  for (const auto& e : table.entries) {
    if (event.contains(e.label.frame, e.label.patch)) ++rc.planted;
  }
  for (std::size_t idx : sel.indices) {
    const auto& e = table.entries[idx];
    if (event.contains(e.label.frame, e.label.patch)) ++rc.hits;
  }
  return rc;
}

}  // namespace selfres
