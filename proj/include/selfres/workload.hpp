// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Planted-signal workloads: a run request bundles model, prompt, video and
// pipeline options, and resolves into concrete weights and videos per seed.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/model.hpp"
#include "selfres/selfres.hpp"
#include "selfres/vision.hpp"

namespace selfres {

// The feature direction the reflection token looks for at `layer`.
//
// Takes the query the last prompt token would emit at `layer` (from its input
// embedding), keeps only the rotary pairs that turn by at most one radian
// across `horizon` positions, and finds the d_V feature vector whose
// projected, normalized key scores highest against that target. Events planted along
// this direction are "what the prompt asks about".
inline std::vector<float> cue_direction(const Weights& w, const Prompt& prompt, std::size_t layer,
                                        std::size_t horizon) {
  const ModelConfig& cfg = w.config;
  if (layer < 1 || layer > cfg.num_layers) throw ConfigError("cue layer outside the model");
  if (prompt.query.empty()) throw ContractError("cue direction needs a query token");
  const LayerWeights& lw = w.layers[layer - 1];
  const int last = prompt.query.back();
  const Matrix q = matmul(rms_normalize_rows(embed_tokens(w, std::span<const int>(&last, 1)), lw.attn_norm,
                                             kNormEpsilon),
                          lw.wq);

  const std::size_t dk = cfg.head_dim;
  const std::size_t d = cfg.model_dim;
  std::vector<bool> keep_pair(dk / 2, false);
  bool any = false;
  for (std::size_t j = 0; j < dk / 2; ++j) {
    const double freq = std::pow(cfg.rope_base, -2.0 * static_cast<double>(j) / static_cast<double>(dk));
    keep_pair[j] = freq * static_cast<double>(horizon) <= 1.0;
    any = any || keep_pair[j];
  }
  if (!any) keep_pair.back() = true;

  Eigen::VectorXd target = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    for (std::size_t j = 0; j < dk / 2; ++j) {
      if (!keep_pair[j]) continue;
      for (std::size_t c : {h * dk + 2 * j, h * dk + 2 * j + 1}) target(static_cast<Eigen::Index>(c)) = q(0, c);
    }
  }
  if (target.norm() == 0.0) throw ConfigError("cue direction undefined: query projection is zero");

  auto to_eigen = [](const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) e(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
    return e;
  };
  // The normalized hidden state maximizing hidden * Wk . target is the
  // matched filter target * Wk^T. The feature vector then solves
  // feature * W = hidden exactly; its scale is irrelevant because the event
  // bias sets the magnitude.
  const Eigen::MatrixXd wk = to_eigen(lw.wk);
  const Eigen::MatrixXd proj = to_eigen(w.vision_projection);
  const Eigen::VectorXd hidden = wk * target;
  const Eigen::VectorXd feature = proj.transpose().completeOrthogonalDecomposition().solve(hidden);
  if (!(feature.norm() > 0.0) || !feature.allFinite()) {
    throw ConfigError("cue direction undefined: projections are singular");
  }
  std::vector<float> out(feature.size());
  for (Eigen::Index i = 0; i < feature.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(feature(i));
  return unit_direction(out);
}

struct RunRequest {
  ModelConfig model;
  VideoSpec video;           // video.seed is replaced by the run seed
  bool cue_direction = true;  // derive video.event.direction from the prompt
  Prompt prompt;
  PipelineOptions options;
  std::uint64_t seed_first = 0;
  std::uint64_t seed_last = 0;  // inclusive

  std::size_t paths() const { return options.segment == 0 ? 0 : options.frames / options.segment; }

  void validate() const {
    model.validate();
    if (options.reflection_layer < 1 || options.reflection_layer > model.num_layers) {
      throw ConfigError("reflection_layer " + std::to_string(options.reflection_layer) + " outside [1, " +
                        std::to_string(model.num_layers) + "]");
    }
    if (options.segment == 0 || options.frames == 0 || options.frames % options.segment != 0) {
      throw DivisibilityError("T = " + std::to_string(options.frames) + " is not a multiple of S = " +
                              std::to_string(options.segment));
    }
    if (options.frames > video.num_frames) {
      throw ConfigError("T = " + std::to_string(options.frames) + " exceeds the video's " +
                        std::to_string(video.num_frames) + " frames");
    }
    if (video.feature_dim != model.vision_dim) {
      throw ConfigError("video feature_dim must equal model vision_dim");
    }
    if (prompt.query.empty()) throw ConfigError("prompt.query must be nonempty");
    if (seed_last < seed_first) throw ConfigError("seed range is empty");
  }
};

// Video spec for one seed, with the cue direction filled in when requested.
inline VideoSpec resolve_video(const RunRequest& req, const Weights& w, std::uint64_t seed) {
  VideoSpec spec = req.video;
  spec.seed = seed;
  if (req.cue_direction) {
    const std::size_t horizon = path_length(req.prompt, req.options.segment * spec.patches_per_frame);
    spec.event.direction = cue_direction(w, req.prompt, req.options.reflection_layer, horizon);
  }
  return spec;
}

// The workload the planted-signal tests and the default CLI request use.
inline RunRequest default_planted_request() {
  RunRequest r;
  r.model = ModelConfig{};
  r.model.seed = 7;
  r.model.reflection_layer = 2;
  r.prompt.system = {1, 2, 3, 4};
  r.prompt.query = {10, 11, 12};
  r.video.num_frames = 128;
  r.video.patches_per_frame = 4;
  r.video.feature_dim = r.model.vision_dim;
  r.video.event.first_frame = 40;
  r.video.event.last_frame = 55;
  r.video.event.first_patch = 1;
  r.video.event.last_patch = 2;
  r.video.event.bias = 0.0f;
  r.options.frames = 64;
  r.options.segment = 32;
  r.options.reflection_layer = 2;
  r.options.mode = InferenceMode::Regular;
  r.options.positions = PositionStrategy::Reassigned;
  r.options.exec = ExecMode::Batch;
  r.options.max_new_tokens = 4;
  return r;
}

}  // namespace selfres
