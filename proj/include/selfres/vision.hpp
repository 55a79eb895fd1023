// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Synthetic stand-in for the vision encoder. Videos are frame x patch grids
// of d_V features: unit Gaussian background plus bias * direction on the cells
// of one planted event. The encoder itself is the identity; only the
// projection into model space is a real matrix.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/model.hpp"
#include "selfres/numerics.hpp"

namespace selfres {

struct EventSpec {
  std::size_t first_frame = 0;
  std::size_t last_frame = 0;  // inclusive
  std::size_t first_patch = 0;
  std::size_t last_patch = 0;  // inclusive
  std::vector<float> direction;
  float bias = 0.0f;

  std::size_t cell_count() const {
    return (last_frame - first_frame + 1) * (last_patch - first_patch + 1);
  }
  bool contains(std::size_t frame, std::size_t patch) const {
    return frame >= first_frame && frame <= last_frame && patch >= first_patch && patch <= last_patch;
  }
};

struct VideoSpec {
  std::size_t num_frames = 0;
  std::size_t patches_per_frame = 0;
  std::size_t feature_dim = 0;
  EventSpec event;
  std::uint64_t seed = 0;
};

struct SyntheticVideo {
  VideoSpec spec;
  std::vector<float> features;  // frame-major, then patch, then channel

  std::span<const float> cell(std::size_t frame, std::size_t patch) const {
    const std::size_t off = (frame * spec.patches_per_frame + patch) * spec.feature_dim;
    return {features.data() + off, spec.feature_dim};
  }
};

struct FrameSample {
  std::vector<std::size_t> indices;
};

// index_i = floor(i * video_len / T)
inline FrameSample sample_frames_uniform(std::size_t video_len, std::size_t count) {
  if (count == 0 || count > video_len) {
    throw RangeError("cannot sample " + std::to_string(count) + " frames from " +
                     std::to_string(video_len));
  }
  FrameSample s;
  s.indices.reserve(count);
  for (std::size_t i = 0; i < count; ++i) s.indices.push_back(i * video_len / count);
  return s;
}

inline std::vector<float> unit_direction(std::span<const float> v) {
  double norm_sq = 0.0;
  for (float x : v) norm_sq += static_cast<double>(x) * x;
  if (!(norm_sq > 0.0)) throw ConfigError("event direction must be a nonzero vector");
  const double inv = 1.0 / std::sqrt(norm_sq);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

inline void validate_video_spec(const VideoSpec& spec) {
  if (spec.num_frames == 0 || spec.patches_per_frame == 0 || spec.feature_dim == 0) {
    throw ConfigError("video dimensions must be positive");
  }
  const EventSpec& e = spec.event;
  if (e.first_frame > e.last_frame || e.last_frame >= spec.num_frames) {
    throw RangeError("event frame range [" + std::to_string(e.first_frame) + ", " +
                     std::to_string(e.last_frame) + "] outside " + std::to_string(spec.num_frames) + " frames");
  }
  if (e.first_patch > e.last_patch || e.last_patch >= spec.patches_per_frame) {
    throw RangeError("event patch range [" + std::to_string(e.first_patch) + ", " +
                     std::to_string(e.last_patch) + "] outside " + std::to_string(spec.patches_per_frame) +
                     " patches");
  }
  if (e.direction.size() != spec.feature_dim) {
    throw DimensionError("event direction has " + std::to_string(e.direction.size()) +
                         " entries, feature_dim is " + std::to_string(spec.feature_dim));
  }
}

// Background noise is drawn in a fixed order independent of the event, so two
// videos with the same seed differ only on event cells.
inline SyntheticVideo generate_planted_video(VideoSpec spec) {
  validate_video_spec(spec);
  spec.event.direction = unit_direction(spec.event.direction);
  SyntheticVideo video;
  video.spec = spec;
  video.features.resize(spec.num_frames * spec.patches_per_frame * spec.feature_dim);
  Rng rng(spec.seed);
  for (float& v : video.features) v = static_cast<float>(rng.normal());
  if (spec.event.bias != 0.0f) {
    const EventSpec& e = spec.event;
    for (std::size_t f = e.first_frame; f <= e.last_frame; ++f) {
      for (std::size_t p = e.first_patch; p <= e.last_patch; ++p) {
        float* cell = video.features.data() + (f * spec.patches_per_frame + p) * spec.feature_dim;
        for (std::size_t c = 0; c < spec.feature_dim; ++c) cell[c] += e.bias * e.direction[c];
      }
    }
  }
  return video;
}

struct VisualLabel {
  std::size_t frame = 0;  // index into the source video
  std::size_t patch = 0;

  friend bool operator==(const VisualLabel&, const VisualLabel&) = default;
};

// Projected visual tokens, frame-major then patch, each with its source cell.
struct VisualTokens {
  Matrix tokens;
  std::vector<VisualLabel> labels;
};

inline VisualTokens encode_and_project(const SyntheticVideo& video, const FrameSample& sample,
                                       const Matrix& projection) {
  const VideoSpec& spec = video.spec;
  if (projection.rows() != spec.feature_dim) {
    throw DimensionError("projection expects " + std::to_string(projection.rows()) +
                         " input features, video has " + std::to_string(spec.feature_dim));
  }
  for (std::size_t i = 0; i < sample.indices.size(); ++i) {
    if (sample.indices[i] >= spec.num_frames || (i > 0 && sample.indices[i] <= sample.indices[i - 1])) {
      throw RangeError("frame sample must be strictly increasing and inside the video");
    }
  }
  Matrix raw(0, spec.feature_dim);
  VisualTokens out;
  for (std::size_t f : sample.indices) {
    for (std::size_t p = 0; p < spec.patches_per_frame; ++p) {
      raw.append_row(video.cell(f, p));
      out.labels.push_back({f, p});
    }
  }
  out.tokens = matmul(raw, projection);
  return out;
}

inline VisualTokens encode_and_project(const SyntheticVideo& video, const FrameSample& sample,
                                       const Weights& weights) {
  return encode_and_project(video, sample, weights.vision_projection);
}

}  // namespace selfres
