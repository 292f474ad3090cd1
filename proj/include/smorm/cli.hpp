#pragma once

// smorm-lab commands. Each writes into `out` the resolved config
// (config.ini), a run log (run.json) and its own CSV/JSON artifacts; all
// writes are atomic and every output is a pure function of (config, seed).

#include <string>
#include <vector>

#include "smorm/config.hpp"

namespace smorm::cli {

// Pseudo-checkpoints: "population" for verify (heads solved from moments on
// the raw latents), "gold" for bon/ppo (the noiseless overall score).
inline constexpr const char* kPopulation = "population";
inline constexpr const char* kGold = "gold";

// train/ID-eval/OOD-eval splits as <split>.pairs.tsv and <split>.attrs.tsv.
void cmd_gen_data(const RunConfig& cfg, const std::string& out);
// Reads <data>/train.pairs.tsv and <data>/train.attrs.tsv as the mode needs
// them; writes checkpoint.json, history.csv (+ .json sidecar), eval.json.
void cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out);
// theorem1.json, lemma1.json, fisher.json and, when verify.theorem2_seeds > 0,
// theorem2.json.
void cmd_verify(const RunConfig& cfg, const std::string& checkpoint, const std::string& out);
// bon.csv (n, kl, proxy, gold, attr_1..attr_K) and bon.json. Several
// checkpoints form an ensemble.
void cmd_bon(const RunConfig& cfg, const std::vector<std::string>& checkpoints, const std::string& out);
// trajectory.csv (step, kl, proxy, gold, attr_1..attr_K) and ppo.json.
void cmd_ppo(const RunConfig& cfg, const std::vector<std::string>& checkpoints, const std::string& out);
// sweep.csv (one row per value), sweep.json, and grid_<i>.ini per point.
void cmd_sweep(const RunConfig& cfg, const std::string& out);
// report.csv in long format (run_id, curve, x, metric, value) with every
// curve shifted to start at 0, and report.json.
void cmd_report(const std::vector<std::string>& runs, const std::string& out);

// Full command line entry. Exit codes: 0 success, 2 configuration error,
// 3 runtime or numeric error. Errors go to stderr as one JSON object.
int run(int argc, char** argv);

}  // namespace smorm::cli
