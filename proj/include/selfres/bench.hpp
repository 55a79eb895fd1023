// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Benchmark driver: one CSV row per (config, seed).

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "selfres/errors.hpp"
#include "selfres/io.hpp"
#include "selfres/model.hpp"
#include "selfres/selfres.hpp"
#include "selfres/workload.hpp"

namespace selfres::bench {

// Bump when columns change.
inline constexpr int kCsvSchemaVersion = 1;
inline constexpr std::string_view kCsvHeader =
    "run_id,config_hash,T,S,R,l,K,mode,position_strategy,exec,seed,planted_recall,attention_macs,"
    "layer_invocations,peak_live_activation_bytes,wall_clock_ms,output_token_ids";

struct ResultRow {
  std::string run_id;
  std::string config_hash;
  std::size_t frames = 0;
  std::size_t segment = 0;
  std::size_t paths = 0;
  std::size_t layer = 0;
  std::size_t keep = 0;
  InferenceMode mode = InferenceMode::Regular;
  PositionStrategy positions = PositionStrategy::Reassigned;
  ExecMode exec = ExecMode::Batch;
  std::uint64_t seed = 0;
  std::optional<double> planted_recall;
  std::uint64_t attention_macs = 0;
  std::uint64_t layer_invocations = 0;
  std::uint64_t peak_live_activation_bytes = 0;
  double wall_clock_ms = 0.0;
  std::vector<int> output_ids;
};

// Every column but wall_clock_ms.
inline std::string deterministic_fields(const ResultRow& r);

inline std::string format_row(const ResultRow& r) {
  std::ostringstream os;
  os << r.run_id << ',' << r.config_hash << ',' << r.frames << ',' << r.segment << ',' << r.paths << ','
     << r.layer << ',' << r.keep << ',' << to_string(r.mode) << ',' << to_string(r.positions) << ','
     << to_string(r.exec) << ',' << r.seed << ',';
  if (r.planted_recall) {
    os << std::fixed << std::setprecision(6) << *r.planted_recall;
  } else {
    os << "nan";
  }
  os << ',' << r.attention_macs << ',' << r.layer_invocations << ',' << r.peak_live_activation_bytes << ','
     << std::fixed << std::setprecision(3) << r.wall_clock_ms << ',';
  for (std::size_t i = 0; i < r.output_ids.size(); ++i) os << (i ? " " : "") << r.output_ids[i];
  return os.str();
}

inline std::string deterministic_fields(const ResultRow& r) {
  ResultRow copy = r;
  copy.wall_clock_ms = 0.0;
  return format_row(copy);
}

// FNV-1a of the canonical request JSON with every seed field removed.
inline std::string config_hash(const RunRequest& req) {
  io::json j = io::to_json(req);
  j.erase("seed");
  j.erase("seeds");
  const std::string canonical = j.dump();
  const std::uint64_t h = fnv1a(std::as_bytes(std::span<const char>(canonical.data(), canonical.size())));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// One pipeline run. The seed selects the video's noise.
inline ResultRow run_one(const RunRequest& req, const Weights& w, std::uint64_t seed) {
  const VideoSpec spec = resolve_video(req, w, seed);
  const SyntheticVideo video = generate_planted_video(spec);
  const auto start = std::chrono::steady_clock::now();
  const PipelineResult res = run_pipeline(video, req.prompt, w, req.options);
  const auto stop = std::chrono::steady_clock::now();

  ResultRow row;
  row.config_hash = config_hash(req);
  row.run_id = row.config_hash.substr(0, 8) + "-s" + std::to_string(seed);
  row.frames = req.options.frames;
  row.segment = req.options.segment;
  row.paths = req.paths();
  row.layer = req.options.reflection_layer;
  row.keep = res.selection.indices.size();
  row.mode = req.options.mode;
  row.positions = req.options.positions;
  row.exec = req.options.exec;
  row.seed = seed;
  row.planted_recall = planted_recall(res.table, res.selection, spec.event).fraction();
  row.attention_macs = res.counters.attention_macs;
  row.layer_invocations = res.counters.layer_invocations;
  row.peak_live_activation_bytes = res.counters.peak_live_activation_bytes;
  row.wall_clock_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  row.output_ids = res.output_ids;
  return row;
}

inline std::vector<ResultRow> run_rows(const RunRequest& req, const Weights& w) {
  req.validate();
  std::vector<ResultRow> rows;
  for (std::uint64_t s = req.seed_first; s <= req.seed_last; ++s) rows.push_back(run_one(req, w, s));
  return rows;
}

// Appends rows to `path`, writing the header when the file is new or empty
// and refusing to append under a different header.
inline void append_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  namespace fs = std::filesystem;
  bool need_header = !fs::exists(path) || fs::file_size(path) == 0;
  if (!need_header) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != kCsvHeader) throw ConfigError(path + " has a different CSV header; refusing to append");
  }
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  if (need_header) out << kCsvHeader << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
}

inline std::vector<ResultRow> run_benchmark(const RunRequest& req, const std::string& out_path) {
  const Weights w = init_weights(req.model);
  auto rows = run_rows(req, w);
  append_csv(out_path, rows);
  return rows;
}

enum class SweepDimension { Layer, Context, Strategy };

inline SweepDimension parse_dimension(std::string_view s) {
  if (s == "layer") return SweepDimension::Layer;
  if (s == "context") return SweepDimension::Context;
  if (s == "strategy") return SweepDimension::Strategy;
  throw ConfigError("unknown sweep dimension '" + std::string(s) + "' (expected layer|context|strategy)");
}

// "a..b" expands to integers; otherwise a comma-separated list.
inline std::vector<std::string> parse_grid(std::string_view text) {
  std::vector<std::string> out;
  const auto dots = text.find("..");
  if (dots != std::string_view::npos && text.find(',') == std::string_view::npos) {
    const auto [a, b] = io::parse_seed_range(text);
    for (auto v = a; v <= b; ++v) out.push_back(std::to_string(v));
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace detail {

inline std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError(what + " grid value '" + s + "' is not a count");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

// Expands the grid into concrete requests, validating each value.
inline std::vector<RunRequest> expand_sweep(SweepDimension dim, const std::vector<std::string>& grid,
                                            const RunRequest& base) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  std::vector<RunRequest> out;
  for (const std::string& value : grid) {
    RunRequest r = base;
    switch (dim) {
      case SweepDimension::Layer: {
        const std::size_t l = detail::parse_count(value, "layer");
        if (l < 1 || l > base.model.num_layers) {
          throw ConfigError("layer grid value " + value + " outside [1, " + std::to_string(base.model.num_layers) +
                            "]");
        }
        r.options.reflection_layer = r.model.reflection_layer = l;
        for (InferenceMode m : {InferenceMode::Regular, InferenceMode::Smooth}) {
          r.options.mode = m;
          out.push_back(r);
        }
        continue;
      }
      case SweepDimension::Context: {
        const auto colon = value.find(':');
        if (colon == std::string::npos) throw ConfigError("context grid value '" + value + "' must be S:T");
        const std::size_t s = detail::parse_count(value.substr(0, colon), "context");
        const std::size_t t = detail::parse_count(value.substr(colon + 1), "context");
        if (s == 0 || t == 0 || t % s != 0) {
          throw ConfigError("context grid value " + value + ": T must be a positive multiple of S");
        }
        if (t > base.video.num_frames) {
          throw ConfigError("context grid value " + value + ": T exceeds the video's " +
                            std::to_string(base.video.num_frames) + " frames");
        }
        r.options.segment = s;
        r.options.frames = t;
        break;
      }
      case SweepDimension::Strategy:
        try {
          r.options.positions = parse_position_strategy(value);
        } catch (const ConfigError&) {
          throw ConfigError("strategy grid value '" + value + "' is not reassigned|dup|inc|single");
        }
        break;
    }
    out.push_back(r);
  }
  for (const auto& r : out) r.validate();
  return out;
}

inline std::vector<ResultRow> sweep(SweepDimension dim, const std::vector<std::string>& grid, const RunRequest& base,
                                    const std::string& out_path) {
  const auto requests = expand_sweep(dim, grid, base);
  const Weights w = init_weights(base.model);
  std::vector<ResultRow> rows;
  for (const auto& r : requests) {
    auto more = run_rows(r, w);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  append_csv(out_path, rows);
  return rows;
}

}  // namespace selfres::bench
