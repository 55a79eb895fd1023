// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON documents: model configs, video specs and run requests.
//
// Parsing is strict: unknown keys are rejected and every error names the
// offending field (or line/column for syntax errors).

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "selfres/errors.hpp"
#include "selfres/model.hpp"
#include "selfres/selfres.hpp"
#include "selfres/vision.hpp"
#include "selfres/workload.hpp"

namespace selfres::io {

using json = nlohmann::json;

namespace detail {

inline void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
}

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<std::string_view> known) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ParseError(where + ": unknown field '" + key + "'");
  }
}

template <typename T>
T get(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
void get_if(const json& j, const std::string& where, const char* key, T& out) {
  if (j.contains(key)) out = get<T>(j, where, key);
}

inline std::size_t count(const json& j, const std::string& where, const char* key) {
  const auto v = get<std::int64_t>(j, where, key);
  if (v < 0) throw ParseError(where + "." + key + ": must be nonnegative");
  return static_cast<std::size_t>(v);
}

inline void count_if(const json& j, const std::string& where, const char* key, std::size_t& out) {
  if (j.contains(key)) out = count(j, where, key);
}

}  // namespace detail

inline json to_json(const ModelConfig& c) {
  return json{{"num_layers", c.num_layers},
              {"num_heads", c.num_heads},
              {"model_dim", c.model_dim},
              {"head_dim", c.head_dim},
              {"vocab_size", c.vocab_size},
              {"vision_dim", c.vision_dim},
              {"default_context", c.default_context},
              {"reflection_layer", c.reflection_layer},
              {"rope_base", c.rope_base},
              {"weight_scale", c.weight_scale},
              {"seed", c.seed}};
}

// Missing fields keep their defaults.
inline ModelConfig model_config_from_json(const json& j, const std::string& where = "model") {
  detail::require_object(j, where);
  detail::reject_unknown(j, where,
                         {"num_layers", "num_heads", "model_dim", "head_dim", "vocab_size", "vision_dim",
                          "default_context", "reflection_layer", "rope_base", "weight_scale", "seed"});
  ModelConfig c;
  detail::count_if(j, where, "num_layers", c.num_layers);
  detail::count_if(j, where, "num_heads", c.num_heads);
  detail::count_if(j, where, "model_dim", c.model_dim);
  detail::count_if(j, where, "head_dim", c.head_dim);
  detail::count_if(j, where, "vocab_size", c.vocab_size);
  detail::count_if(j, where, "vision_dim", c.vision_dim);
  detail::count_if(j, where, "default_context", c.default_context);
  detail::count_if(j, where, "reflection_layer", c.reflection_layer);
  detail::get_if(j, where, "rope_base", c.rope_base);
  detail::get_if(j, where, "weight_scale", c.weight_scale);
  detail::get_if(j, where, "seed", c.seed);
  return c;
}

// `direction` is written as "cue" when the request derives it from the prompt.
inline json to_json(const VideoSpec& v, bool cue) {
  const EventSpec& e = v.event;
  json event{{"frame_range", {e.first_frame, e.last_frame}},
             {"patch_range", {e.first_patch, e.last_patch}},
             {"bias", e.bias}};
  if (cue) {
    event["direction"] = "cue";
  } else {
    event["direction"] = e.direction;
  }
  return json{{"num_frames", v.num_frames},
              {"patches_per_frame", v.patches_per_frame},
              {"feature_dim", v.feature_dim},
              {"event", event},
              {"seed", v.seed}};
}

// Returns the spec and whether the direction is "cue".
inline std::pair<VideoSpec, bool> video_spec_from_json(const json& j, std::size_t default_feature_dim,
                                                       const std::string& where = "video") {
  detail::require_object(j, where);
  detail::reject_unknown(j, where, {"num_frames", "patches_per_frame", "feature_dim", "event", "seed"});
  VideoSpec v;
  v.num_frames = detail::count(j, where, "num_frames");
  v.patches_per_frame = detail::count(j, where, "patches_per_frame");
  v.feature_dim = default_feature_dim;
  detail::count_if(j, where, "feature_dim", v.feature_dim);
  detail::get_if(j, where, "seed", v.seed);

  const std::string ew = where + ".event";
  if (!j.contains("event")) throw ParseError(where + ": missing field 'event'");
  const json& e = j.at("event");
  detail::require_object(e, ew);
  detail::reject_unknown(e, ew, {"frame_range", "patch_range", "direction", "bias"});
  auto range = [&](const char* key) {
    const auto r = detail::get<std::vector<std::int64_t>>(e, ew, key);
    if (r.size() != 2 || r[0] < 0 || r[1] < 0) {
      throw ParseError(ew + "." + key + ": expected [first, last] with nonnegative entries");
    }
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(r[0]), static_cast<std::size_t>(r[1]));
  };
  std::tie(v.event.first_frame, v.event.last_frame) = range("frame_range");
  std::tie(v.event.first_patch, v.event.last_patch) = range("patch_range");
  detail::get_if(e, ew, "bias", v.event.bias);
  bool cue = true;
  if (e.contains("direction")) {
    const json& d = e.at("direction");
    if (d.is_string()) {
      if (d.get<std::string>() != "cue") throw ParseError(ew + ".direction: expected \"cue\" or an array");
    } else {
      cue = false;
      v.event.direction = detail::get<std::vector<float>>(e, ew, "direction");
    }
  }
  return {v, cue};
}

// "a..b" (inclusive) or a single integer.
inline std::pair<std::uint64_t, std::uint64_t> parse_seed_range(std::string_view text) {
  auto number = [&](std::string_view s) {
    std::uint64_t v = 0;
    if (s.empty()) throw ParseError("seed range '" + std::string(text) + "': empty bound");
    for (char ch : s) {
      if (ch < '0' || ch > '9') throw ParseError("seed range '" + std::string(text) + "': not a number");
      v = v * 10 + static_cast<std::uint64_t>(ch - '0');
    }
    return v;
  };
  const auto dots = text.find("..");
  if (dots == std::string_view::npos) {
    const auto v = number(text);
    return {v, v};
  }
  const auto a = number(text.substr(0, dots));
  const auto b = number(text.substr(dots + 2));
  if (b < a) throw ParseError("seed range '" + std::string(text) + "' is empty");
  return {a, b};
}

inline json to_json(const RunRequest& r) {
  json video = to_json(r.video, r.cue_direction);
  video.erase("seed");  // the run seed decides
  json j{{"model", to_json(r.model)},
         {"video", video},
         {"prompt", {{"system", r.prompt.system}, {"query", r.prompt.query}}},
         {"T", r.options.frames},
         {"S", r.options.segment},
         {"reflection_layer", r.options.reflection_layer},
         {"K", r.options.keep ? json(*r.options.keep) : json(nullptr)},
         {"mode", to_string(r.options.mode)},
         {"position_strategy", to_string(r.options.positions)},
         {"exec", to_string(r.options.exec)},
         {"max_new_tokens", r.options.max_new_tokens}};
  if (r.seed_first == r.seed_last) {
    j["seed"] = r.seed_first;
  } else {
    j["seeds"] = std::to_string(r.seed_first) + ".." + std::to_string(r.seed_last);
  }
  return j;
}

inline RunRequest run_request_from_json(const json& j) {
  const std::string where = "request";
  detail::require_object(j, where);
  detail::reject_unknown(j, where,
                         {"model", "video", "prompt", "T", "S", "reflection_layer", "K", "mode",
                          "position_strategy", "exec", "seed", "seeds", "max_new_tokens"});
  RunRequest r;
  if (j.contains("model")) r.model = model_config_from_json(j.at("model"));
  if (!j.contains("video")) throw ParseError(where + ": missing field 'video'");
  if (j.at("video").is_object() && j.at("video").contains("seed")) {
    throw ParseError("video.seed: a request sets its seeds with 'seed' or 'seeds'");
  }
  std::tie(r.video, r.cue_direction) = video_spec_from_json(j.at("video"), r.model.vision_dim);

  if (!j.contains("prompt")) throw ParseError(where + ": missing field 'prompt'");
  const json& p = j.at("prompt");
  detail::require_object(p, "prompt");
  detail::reject_unknown(p, "prompt", {"system", "query"});
  detail::get_if(p, "prompt", "system", r.prompt.system);
  r.prompt.query = detail::get<std::vector<int>>(p, "prompt", "query");

  r.options.frames = detail::count(j, where, "T");
  r.options.segment = detail::count(j, where, "S");
  r.options.reflection_layer = r.model.reflection_layer;
  detail::count_if(j, where, "reflection_layer", r.options.reflection_layer);
  r.model.reflection_layer = r.options.reflection_layer;
  if (j.contains("K") && !j.at("K").is_null()) r.options.keep = detail::count(j, where, "K");
  try {
    if (j.contains("mode")) r.options.mode = parse_mode(detail::get<std::string>(j, where, "mode"));
    if (j.contains("position_strategy")) {
      r.options.positions = parse_position_strategy(detail::get<std::string>(j, where, "position_strategy"));
    }
    if (j.contains("exec")) r.options.exec = parse_exec(detail::get<std::string>(j, where, "exec"));
  } catch (const ConfigError& e) {
    throw ParseError(where + ": " + e.what());
  }
  detail::count_if(j, where, "max_new_tokens", r.options.max_new_tokens);
  if (j.contains("seed")) r.seed_first = r.seed_last = detail::get<std::uint64_t>(j, where, "seed");
  if (j.contains("seeds")) {
    std::tie(r.seed_first, r.seed_last) = parse_seed_range(detail::get<std::string>(j, where, "seeds"));
  }
  r.video.seed = r.seed_first;
  return r;
}

// Parses text, turning syntax errors into "line L, column C" diagnostics.
inline json parse_document(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(source + ": line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                     e.what());
  }
}

inline json load_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_document(buf.str(), path);
}

}  // namespace selfres::io
