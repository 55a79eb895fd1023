// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "selfres/oracle.hpp"
#include "selfres/selfres.hpp"
#include "test_support.hpp"

namespace selfres {
namespace {

VisualTokens numbered_tokens(std::size_t frames, std::size_t patches, std::size_t width) {
  VisualTokens v;
  v.tokens = Matrix(frames * patches, width);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t p = 0; p < patches; ++p) {
      const std::size_t i = f * patches + p;
      v.tokens(i, 0) = static_cast<float>(i);
      v.labels.push_back({f, p});
    }
  }
  return v;
}

SaliencyTable table_from(std::vector<std::vector<float>> per_path) {
  SaliencyTable t;
  t.num_paths = per_path.size();
  t.visual_per_path = per_path.front().size();
  for (std::size_t r = 0; r < per_path.size(); ++r) {
    for (std::size_t i = 0; i < per_path[r].size(); ++i) {
      t.entries.push_back({r, {i, 0}, t.entries.size(), per_path[r][i]});
    }
  }
  return t;
}

TEST(SplitPaths, PathCounts) {
  EXPECT_EQ(split_paths(numbered_tokens(128, 1, 2), 128, 64).size(), 2u);
  EXPECT_EQ(split_paths(numbered_tokens(64, 1, 2), 64, 32).size(), 2u);
  EXPECT_THROW(split_paths(numbered_tokens(100, 1, 2), 100, 64), DivisibilityError);
}

TEST(SplitPaths, ContiguousSegmentsInOrder) {
  const auto paths = split_paths(numbered_tokens(6, 2, 3), 6, 2);
  ASSERT_EQ(paths.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    ASSERT_EQ(paths[r].labels.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(paths[r].tokens(i, 0), static_cast<float>(r * 4 + i));
      EXPECT_EQ(paths[r].labels[i].frame, 2 * r + i / 2);
    }
  }
}

TEST(BuildPathSequence, LayoutAndReflectionToken) {
  ModelConfig c;
  c.vision_dim = 5;
  const Weights w = init_weights(c);
  const Prompt prompt{{1, 2, 3, 4}, {10, 11, 12}};
  const auto visual = numbered_tokens(3, 2, c.model_dim);
  const ReflectionPath p = build_path_sequence(w, prompt, visual, 1);
  EXPECT_EQ(p.input.size(), 13u);
  EXPECT_EQ(p.input.reflection_index(), 12u);
  EXPECT_EQ(p.input.entries[12].token_id, 12);
  EXPECT_EQ(p.input.entries[12].segment, Segment::Query);
  EXPECT_EQ(p.input.entries[4].segment, Segment::Visual);
  EXPECT_EQ(p.input.entries[4].path, 1u);
  EXPECT_EQ(p.positions, testing::iota_positions(13));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(p.input.embeddings(4 + i, 0), static_cast<float>(i));
}

TEST(BuildPathSequence, EmptyQueryIsContractError) {
  const Weights w = init_weights(ModelConfig{});
  EXPECT_THROW(build_path_sequence(w, Prompt{{1}, {}}, numbered_tokens(1, 2, 32), 0), ContractError);
}

// d = 2, one head, identity projections and gains that undo the RMS scale of
// a one-hot row, all positions zero.
Weights identity_toy() {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 1;
  c.model_dim = 2;
  c.head_dim = 2;
  c.vocab_size = 4;
  c.vision_dim = 2;
  c.reflection_layer = 1;
  Weights w = init_weights(c);
  auto& lw = w.layers[0];
  lw.attn_norm.assign(2, static_cast<float>(1.0 / std::sqrt(2.0)));
  lw.wq = Matrix(2, 2);
  lw.wk = Matrix(2, 2);
  lw.wq(0, 0) = lw.wq(1, 1) = lw.wk(0, 0) = lw.wk(1, 1) = 1.0f;
  return w;
}

TEST(SraScores, HandComputedToy) {
  const Weights w = identity_toy();
  Matrix hidden(3, 2);
  hidden(0, 0) = 1.0f;  // visual
  hidden(1, 1) = 1.0f;  // visual
  hidden(2, 0) = 1.0f;  // reflection
  const std::vector<int> pos{0, 0, 0};
  WorkCounters wc;
  const auto s = sra_scores(w, 1, hidden, pos, 2, 0, 2, wc);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_NEAR(s[0], 0.7071, 1e-4);
  EXPECT_NEAR(s[1], 0.0, 1e-6);
  EXPECT_EQ(wc.sra_macs, 2u * 2u * 1u);
}

TEST(SraScores, DuplicateTokensScoreEqually) {
  Rng rng(4);
  const Weights w = init_weights(testing::tiny_config(3));
  Matrix hidden = testing::random_matrix(rng, 6, w.config.model_dim);
  std::copy_n(hidden.row(1).begin(), w.config.model_dim, hidden.row(3).begin());
  const std::vector<int> pos{0, 5, 1, 5, 2, 9};
  WorkCounters wc;
  const auto s = sra_scores(w, 1, hidden, pos, 5, 1, 4, wc);
  EXPECT_EQ(s[0], s[2]);
}

TEST(SraScores, ScaleEquivariantInKeyInputs) {
  // With pre-norm attention, raw hidden scale cancels; the equivariance lives
  // in the key inputs after normalization, i.e. scaling W_k.
  Rng rng(5);
  Weights w = init_weights(testing::tiny_config(8));
  const Matrix hidden = testing::random_matrix(rng, 9, w.config.model_dim);
  const auto pos = testing::iota_positions(9);
  WorkCounters wc;
  const auto base = sra_scores(w, 1, hidden, pos, 8, 2, 5, wc);
  for (float c : {4.0f, 3.0f}) {
    Weights scaled = w;
    for (float& x : scaled.layers[0].wk.data()) x *= c;
    const auto s = sra_scores(scaled, 1, hidden, pos, 8, 2, 5, wc);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], c * base[i], 1e-5f * (1.0f + std::abs(s[i])));
    EXPECT_EQ(select_salient(table_from({s}), 2).indices, select_salient(table_from({base}), 2).indices);
  }
}

TEST(SraScores, HiddenScaleInvariantUnderPreNorm) {
  Rng rng(6);
  const Weights w = init_weights(testing::tiny_config(2));
  Matrix hidden = testing::random_matrix(rng, 7, w.config.model_dim);
  const auto pos = testing::iota_positions(7);
  WorkCounters wc;
  const auto a = sra_scores(w, 1, hidden, pos, 6, 1, 4, wc);
  for (float& x : hidden.data()) x *= 8.0f;
  const auto b = sra_scores(w, 1, hidden, pos, 6, 1, 4, wc);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5f);
}

TEST(SraScores, RejectsBadLayerAndRows) {
  const Weights w = identity_toy();
  Matrix hidden(3, 2);
  const std::vector<int> pos{0, 1, 2};
  WorkCounters wc;
  EXPECT_THROW(sra_scores(w, 2, hidden, pos, 2, 0, 2, wc), ConfigError);
  EXPECT_THROW(sra_scores(w, 0, hidden, pos, 2, 0, 2, wc), ConfigError);
  EXPECT_THROW(sra_scores(w, 1, hidden, pos, 2, 2, 2, wc), RangeError);
}

TEST(SelectSalient, WorkedExample) {
  const auto t = table_from({{0.9f, 0.1f, 0.5f, 0.2f}, {0.8f, 0.7f, 0.05f, 0.6f}});
  EXPECT_EQ(select_salient(t, 4).indices, (std::vector<std::size_t>{0, 4, 5, 7}));
}

TEST(SelectSalient, TiesGoToLowerIndex) {
  const auto t = table_from({{0.3f, 0.3f, 0.3f}, {0.3f, 0.3f, 0.3f}});
  EXPECT_EQ(select_salient(t, 3).indices, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SelectSalient, DegenerateAndClamped) {
  const auto t = table_from({{0.3f, 0.1f}, {0.2f, 0.4f}});
  const auto none = select_salient(t, 0);
  EXPECT_TRUE(none.degenerate);
  EXPECT_TRUE(none.indices.empty());
  const auto all = select_salient(t, 9);
  EXPECT_TRUE(all.clamped);
  EXPECT_EQ(all.indices, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(AssignPositions, Strategies) {
  // system(2) | visual from path 0 local 3, path 1 local 3, path 1 local 5 | query local 7
  const std::vector<TokenProvenance> toks{{Segment::System, 0, 0}, {Segment::System, 0, 1},
                                          {Segment::Visual, 0, 3}, {Segment::Visual, 1, 3},
                                          {Segment::Visual, 1, 5}, {Segment::Query, 0, 7}};
  EXPECT_EQ(assign_positions(toks, PositionStrategy::Reassigned, 2, 8), (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(assign_positions(toks, PositionStrategy::OriginalDuplicated, 2, 8),
            (std::vector<int>{0, 1, 3, 3, 5, 7}));
  EXPECT_EQ(assign_positions(toks, PositionStrategy::OriginalPathIncremented, 2, 8),
            (std::vector<int>{0, 1, 3, 11, 13, 7}));
  EXPECT_EQ(assign_positions(toks, PositionStrategy::SinglePosition, 2, 8), (std::vector<int>{0, 1, 2, 2, 2, 5}));
}

TEST(AssignPositions, PathIncrementedSecondPath) {
  const std::vector<TokenProvenance> toks{{Segment::Visual, 1, 7}};
  EXPECT_EQ(assign_positions(toks, PositionStrategy::OriginalPathIncremented, 4, 13).front(), 20);
}

struct Scenario {
  RunRequest req;
  Weights w;
  SyntheticVideo video;
};

Scenario default_scenario(std::size_t layer, std::size_t frames, std::size_t segment) {
  Scenario s{default_planted_request(), {}, {}};
  s.req.options.reflection_layer = s.req.model.reflection_layer = layer;
  s.req.options.frames = frames;
  s.req.options.segment = segment;
  s.req.options.max_new_tokens = 1;
  s.w = init_weights(s.req.model);
  VideoSpec spec = resolve_video(s.req, s.w, 3);
  spec.event.bias = 32.0f;
  s.video = generate_planted_video(spec);
  return s;
}

TEST(Converge, RegularLengthAndOrder) {
  auto s = default_scenario(2, 4, 2);  // R = 2, N_V = 8 per path
  s.req.options.keep = 6;
  ReflectionState st = reflect(s.video, s.req.prompt, s.w, s.req.options);
  ConvergencePlan plan{st.selection.indices, 6, InferenceMode::Regular, PositionStrategy::Reassigned,
                       ExecMode::Batch};
  const ConvergedContext ctx = converge(st.paths, plan, s.w);
  EXPECT_EQ(ctx.hidden.rows(), 13u);
  EXPECT_EQ(ctx.start_layer, 1u);
  EXPECT_EQ(ctx.provenance.front().segment, Segment::System);
  EXPECT_EQ(ctx.provenance.back().segment, Segment::Query);
  for (std::size_t i = 0; i < 6; ++i) {
    const std::size_t flat = st.selection.indices[i];
    EXPECT_EQ(ctx.provenance[4 + i].path, flat / 8);
    EXPECT_EQ(ctx.provenance[4 + i].original_position, 4 + flat % 8);
  }
}

TEST(Converge, SinglePathKeepAllIsIdentity) {
  auto s = default_scenario(3, 4, 4);
  ReflectionState st = reflect(s.video, s.req.prompt, s.w, s.req.options);
  ASSERT_EQ(st.paths.size(), 1u);
  ConvergencePlan plan{st.selection.indices, st.keep, InferenceMode::Regular, PositionStrategy::Reassigned,
                       ExecMode::Batch};
  const ConvergedContext ctx = converge(st.paths, plan, s.w);
  EXPECT_EQ(ctx.hidden, st.paths[0].input.embeddings);
  EXPECT_EQ(ctx.positions, st.paths[0].positions);
  plan.mode = InferenceMode::Smooth;
  const ConvergedContext sm = converge(st.paths, plan, s.w);
  EXPECT_EQ(sm.hidden, st.paths[0].hidden_at_layer);
  EXPECT_EQ(sm.start_layer, 4u);
}

TEST(Converge, RejectsInconsistentPlans) {
  auto s = default_scenario(2, 4, 2);
  ReflectionState st = reflect(s.video, s.req.prompt, s.w, s.req.options);
  EXPECT_THROW(converge(st.paths, {{0, 1}, 3, InferenceMode::Regular, {}, {}}, s.w), ContractError);
  EXPECT_THROW(converge(st.paths, {{1, 1}, 2, InferenceMode::Regular, {}, {}}, s.w), ContractError);
  EXPECT_THROW(converge(st.paths, {{0, 16}, 2, InferenceMode::Regular, {}, {}}, s.w), ContractError);
  EXPECT_THROW(converge(std::span<const ReflectionPath>{}, {}, s.w), ContractError);
}

std::uint64_t prefill_macs(std::size_t layers, std::size_t n, std::size_t d) {
  return static_cast<std::uint64_t>(layers) * 2 * n * n * d;
}

TEST(Pipeline, InvocationAndMacFormulas) {
  for (std::size_t layer : {1u, 2u, 5u, 8u}) {
    for (auto [frames, segment] : {std::pair<std::size_t, std::size_t>{8, 4}, {12, 4}}) {
      for (InferenceMode mode : {InferenceMode::Regular, InferenceMode::Smooth}) {
        auto s = default_scenario(layer, frames, segment);
        s.req.options.mode = mode;
        s.req.options.keep = 10;
        const auto res = run_pipeline(s.video, s.req.prompt, s.w, s.req.options);
        const std::size_t R = frames / segment;
        const std::size_t L = s.w.config.num_layers;
        const std::size_t d = s.w.config.model_dim;
        const std::size_t nv = segment * 4;
        const std::size_t nr = 4 + nv + 3;
        const std::size_t n = 4 + 10 + 3;
        SCOPED_TRACE(::testing::Message() << "l=" << layer << " R=" << R << " " << to_string(mode));
        EXPECT_EQ(res.reflection_counters.layer_invocations, R * layer);
        EXPECT_EQ(res.reflection_counters.attention_macs, R * prefill_macs(layer, nr, d));
        EXPECT_EQ(res.reflection_counters.sra_macs,
                  R * nv * s.w.config.head_dim * s.w.config.num_heads);
        const std::size_t final_layers = mode == InferenceMode::Regular ? L : L - layer;
        EXPECT_EQ(res.final_counters.layer_invocations, final_layers);
        // Smooth layers past l see the relabelled cache of the same length.
        EXPECT_EQ(res.final_counters.attention_macs, prefill_macs(final_layers, n, d));
        EXPECT_EQ(res.counters.layer_invocations, R * layer + final_layers);
      }
    }
  }
}

TEST(Pipeline, SraMacsLinearInVisualTokens) {
  std::vector<std::uint64_t> macs;
  for (std::size_t segment : {2u, 4u, 8u}) {
    auto s = default_scenario(2, segment, segment);
    macs.push_back(reflect(s.video, s.req.prompt, s.w, s.req.options).counters.sra_macs);
  }
  EXPECT_EQ(macs[1], 2 * macs[0]);
  EXPECT_EQ(macs[2], 4 * macs[0]);
}

TEST(Pipeline, SystemPrefixIdenticalAcrossPaths) {
  auto s = default_scenario(5, 12, 4);
  ReflectionState st = reflect(s.video, s.req.prompt, s.w, s.req.options);
  for (std::size_t r = 1; r < st.paths.size(); ++r) {
    for (std::size_t i = 0; i < s.req.prompt.system.size(); ++i) {
      const auto a = st.paths[0].hidden_at_layer.row(i);
      const auto b = st.paths[r].hidden_at_layer.row(i);
      EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << "path " << r << " row " << i;
    }
  }
}

TEST(Pipeline, SinglePathMatchesBaseline) {
  for (InferenceMode mode : {InferenceMode::Regular, InferenceMode::Smooth}) {
    auto s = default_scenario(3, 8, 8);
    s.req.options.mode = mode;
    s.req.options.max_new_tokens = 5;
    const auto res = run_pipeline(s.video, s.req.prompt, s.w, s.req.options);
    const auto base = oracle::baseline_run(s.video, s.req.prompt, s.w, 8, 5);
    EXPECT_EQ(res.output_ids, base.output_ids) << to_string(mode);
    if (mode == InferenceMode::Smooth) {
      EXPECT_EQ(res.counters.attention_macs, base.counters.attention_macs);
      EXPECT_EQ(res.counters.layer_invocations, base.counters.layer_invocations);
    }
  }
}

TEST(Pipeline, BatchAndSequentialAgree) {
  auto s = default_scenario(2, 16, 4);
  s.req.options.max_new_tokens = 4;
  s.req.options.exec = ExecMode::Batch;
  const auto batch = run_pipeline(s.video, s.req.prompt, s.w, s.req.options);
  s.req.options.exec = ExecMode::Sequential;
  const auto seq = run_pipeline(s.video, s.req.prompt, s.w, s.req.options);
  EXPECT_EQ(batch.output_ids, seq.output_ids);
  EXPECT_EQ(batch.selection.indices, seq.selection.indices);
  EXPECT_EQ(batch.counters.attention_macs, seq.counters.attention_macs);
  EXPECT_LT(seq.reflection_counters.peak_live_activation_bytes, batch.reflection_counters.peak_live_activation_bytes);
}

TEST(Pipeline, RepeatRunsAreBitIdentical) {
  auto s = default_scenario(2, 8, 4);
  s.req.options.max_new_tokens = 4;
  const auto a = run_pipeline(s.video, s.req.prompt, s.w, s.req.options);
  const auto b = run_pipeline(s.video, s.req.prompt, s.w, s.req.options);
  EXPECT_EQ(a.output_ids, b.output_ids);
  for (std::size_t i = 0; i < a.table.entries.size(); ++i) EXPECT_EQ(a.table.entries[i].score, b.table.entries[i].score);
}

TEST(Pipeline, PositionStrategiesShapeContext) {
  for (PositionStrategy ps : {PositionStrategy::Reassigned, PositionStrategy::OriginalDuplicated,
                              PositionStrategy::OriginalPathIncremented, PositionStrategy::SinglePosition}) {
    auto s = default_scenario(2, 8, 4);
    s.req.options.positions = ps;
    s.req.options.max_new_tokens = 2;
    const auto res = run_pipeline(s.video, s.req.prompt, s.w, s.req.options);
    const auto& ctx = res.context;
    EXPECT_EQ(ctx.positions.size(), ctx.provenance.size());
    for (std::size_t i = 0; i < ctx.positions.size(); ++i) {
      const auto& t = ctx.provenance[i];
      const int expected = [&] {
        switch (ps) {
          case PositionStrategy::Reassigned: return static_cast<int>(i);
          case PositionStrategy::OriginalDuplicated: return static_cast<int>(t.original_position);
          case PositionStrategy::OriginalPathIncremented: return static_cast<int>(t.original_position + t.path * 23);
          default: return static_cast<int>(t.segment == Segment::Visual ? 4 : i);
        }
      }();
      EXPECT_EQ(ctx.positions[i], expected) << to_string(ps) << " row " << i;
    }
    EXPECT_EQ(res.output_ids.size(), 2u);
  }
}

TEST(Pipeline, ContractViolations) {
  auto s = default_scenario(2, 8, 4);
  auto opt = s.req.options;
  opt.segment = 3;
  EXPECT_THROW(run_pipeline(s.video, s.req.prompt, s.w, opt), DivisibilityError);
  opt = s.req.options;
  opt.segment = 8;
  Weights small = s.w;
  small.config.default_context = 38;  // N_r = 4 + 32 + 3 = 39
  EXPECT_THROW(run_pipeline(s.video, s.req.prompt, small, opt), ConfigError);
  small.config.default_context = 39;
  EXPECT_NO_THROW(run_pipeline(s.video, s.req.prompt, small, opt));
  opt = s.req.options;
  opt.reflection_layer = 9;
  EXPECT_THROW(run_pipeline(s.video, s.req.prompt, s.w, opt), ConfigError);
  opt.reflection_layer = 2;
  opt.keep = 0;
  const auto none = run_pipeline(s.video, s.req.prompt, s.w, opt);
  EXPECT_TRUE(none.selection.degenerate);
  EXPECT_FALSE(none.warnings.empty());
  opt.keep = 1000;
  const auto all = run_pipeline(s.video, s.req.prompt, s.w, opt);
  EXPECT_TRUE(all.selection.clamped);
  EXPECT_EQ(all.selection.indices.size(), 32u);
}

TEST(PlantedRecall, CountsEventCells) {
  SaliencyTable t = table_from({{0.1f, 0.9f, 0.2f, 0.8f}});
  EventSpec e{1, 1, 0, 0, {}, 0.0f};
  t.entries[1].label = {1, 0};
  t.entries[3].label = {1, 0};
  const auto rc = planted_recall(t, select_salient(t, 1), e);
  EXPECT_EQ(rc.planted, 2u);
  EXPECT_EQ(rc.hits, 1u);
  EXPECT_DOUBLE_EQ(*rc.fraction(), 0.5);
  EXPECT_FALSE(RecallCount{}.fraction().has_value());
}

}  // namespace
}  // namespace selfres
