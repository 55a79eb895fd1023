// Copyright 2026 The selfres Authors
// SPDX-License-Identifier: Apache-2.0

// selfres: run, sweep and calibrate self-reflective sampling experiments.
//
//   selfres run   --config req.json --seeds 0..9 --out rows.csv
//   selfres sweep --config req.json --dimension layer --grid 1..8 --out rows.csv
//   selfres calibrate --config req.json --seeds 0..9 --target 0.99 --out trace.csv
//   selfres diverge   --config req.json --seeds 3 --out divergence.csv
//
// Flags override the matching request fields.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "selfres/bench.hpp"
#include "selfres/io.hpp"
#include "selfres/oracle.hpp"
#include "selfres/workload.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::size_t> frames, segment, layer, keep;
  std::optional<std::string> mode, pos, exec, seeds;
  std::string out;
};

void add_request_flags(CLI::App* cmd, Overrides& o, bool needs_out) {
  cmd->add_option("--config", o.config, "run request JSON (defaults to the built-in planted workload)");
  cmd->add_option("--frames", o.frames, "T, frames sampled from the video");
  cmd->add_option("--segment", o.segment, "S, frames per reflection path");
  cmd->add_option("--layer", o.layer, "reflection layer l (1-based)");
  cmd->add_option("--keep", o.keep, "K, visual tokens kept after selection");
  cmd->add_option("--mode", o.mode, "regular|smooth");
  cmd->add_option("--pos", o.pos, "reassigned|dup|inc|single");
  cmd->add_option("--exec", o.exec, "batch|seq");
  cmd->add_option("--seeds", o.seeds, "seed or inclusive range a..b");
  auto* out = cmd->add_option("--out", o.out, "output CSV path");
  if (needs_out) out->required();
}

selfres::RunRequest load_request(const Overrides& o) {
  using namespace selfres;
  RunRequest r = o.config.empty() ? default_planted_request() : io::run_request_from_json(io::load_document(o.config));
  if (o.frames) r.options.frames = *o.frames;
  if (o.segment) r.options.segment = *o.segment;
  if (o.layer) r.options.reflection_layer = r.model.reflection_layer = *o.layer;
  if (o.keep) r.options.keep = *o.keep;
  if (o.mode) r.options.mode = parse_mode(*o.mode);
  if (o.pos) r.options.positions = parse_position_strategy(*o.pos);
  if (o.exec) r.options.exec = parse_exec(*o.exec);
  if (o.seeds) std::tie(r.seed_first, r.seed_last) = io::parse_seed_range(*o.seeds);
  r.validate();
  return r;
}

std::vector<std::uint64_t> seed_list(const selfres::RunRequest& r) {
  std::vector<std::uint64_t> seeds;
  for (auto s = r.seed_first; s <= r.seed_last; ++s) seeds.push_back(s);
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-reflective sampling engine"};
  app.require_subcommand(1);

  Overrides run_o, sweep_o, cal_o, div_o;
  auto* run = app.add_subcommand("run", "run a request once per seed and append CSV rows");
  add_request_flags(run, run_o, true);

  auto* sweep = app.add_subcommand("sweep", "sweep one dimension of a request");
  add_request_flags(sweep, sweep_o, true);
  std::string dimension, grid;
  sweep->add_option("--dimension", dimension, "layer|context|strategy")->required();
  sweep->add_option("--grid", grid, "1..8 | 32:64,32:96 | reassigned,dup,inc,single")->required();

  auto* cal = app.add_subcommand("calibrate", "find the smallest event bias reaching a planted recall");
  add_request_flags(cal, cal_o, false);
  double target = 0.99;
  cal->add_option("--target", target, "target planted recall in (0, 1]");

  auto* div = app.add_subcommand("diverge", "pairwise hidden-state distances of text tokens across paths");
  add_request_flags(div, div_o, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto rows = selfres::bench::run_benchmark(load_request(run_o), run_o.out);
      std::cerr << "wrote " << rows.size() << " rows to " << run_o.out << '\n';
    } else if (*sweep) {
      const auto rows = selfres::bench::sweep(selfres::bench::parse_dimension(dimension),
                                              selfres::bench::parse_grid(grid), load_request(sweep_o), sweep_o.out);
      std::cerr << "wrote " << rows.size() << " rows to " << sweep_o.out << '\n';
    } else if (*cal) {
      const auto req = load_request(cal_o);
      const auto seeds = seed_list(req);
      selfres::oracle::CalibrationSettings settings;
      settings.target_recall = target;
      const auto res = selfres::oracle::calibrate_beta(req, seeds, settings);
      if (!cal_o.out.empty()) {
        std::ofstream out(cal_o.out, std::ios::binary);
        selfres::oracle::write_csv(out, res);
      }
      if (!res.success) {
        std::cerr << "calibration failed: recall " << target << " not reached up to beta " << settings.max_beta
                  << '\n';
        return 2;
      }
      std::cout << "beta " << res.beta << '\n';
    } else if (*div) {
      auto req = load_request(div_o);
      const selfres::Weights w = selfres::init_weights(req.model);
      const auto video = selfres::generate_planted_video(selfres::resolve_video(req, w, req.seed_first));
      const auto st = selfres::reflect(video, req.prompt, w, req.options);
      std::ofstream out(div_o.out, std::ios::binary);
      selfres::oracle::write_csv(out, selfres::oracle::hidden_divergence(st.paths));
    }
  } catch (const selfres::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
