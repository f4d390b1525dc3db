#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "edgeseg/analysis.hpp"
#include "edgeseg/config.hpp"
#include "edgeseg/dataio.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {

/// Hard feasibility predicate: a candidate must reach acc_min percent
/// accuracy and respect any resource caps that are present.
struct Requirements {
  double acc_min = 88.0;  // percent, in (0, 100]
  std::optional<double> max_params_millions;
  std::optional<double> max_flops_billions;
};

bool indicator(const PerfRecord& perf, const Requirements& req);

/// One candidate mutation. `changed` is false when no legal mutation exists.
struct Proposal {
  NetworkConfig config;
  bool changed = false;
  std::string mutation;  // human-readable description of the edit
};

/// Draws one mutation: scale a width group by 0.75 or 1.25 (rounded to a
/// multiple of 8), change a compression ratio within {2,4,8}, toggle an
/// optional shortcut_mask entry, or add/remove a residual-bottleneck repeat
/// (stage depth stays within [1, 8]). The result always satisfies the config
/// invariants.
Proposal propose(const NetworkConfig& config, Rng& rng);

struct EvalOptions {
  int budget_epochs = 1;
  double lr = 0.05;
  double momentum = 0.9;
  int batch = 8;
  std::uint64_t seed = 0;
};

/// Trains a fresh instantiation for the budget and scores it on the
/// validation split. Training divergence or zero accuracy yields a failed
/// record (u = -inf) that can never satisfy the indicator.
PerfRecord evaluate(const NetworkConfig& config, const Dataset& train_set,
                    const Dataset& val_set, const EvalOptions& options);

struct TraceEntry {
  int k = 0;
  bool accepted = false;
  PerfRecord perf;
  std::string digest;
  std::string snapshot_path;
  std::string mutation;
};

struct SearchState {
  std::uint64_t seed = 0;
  int iterations = 0;
  bool infeasible_start = false;
  NetworkConfig best;
  std::vector<std::pair<std::string, PerfRecord>> accepted;  // digest, perf
  std::vector<TraceEntry> log;  // every iteration, k=0 is the initial config
};

/// Greedy accept-if-better loop over propose/evaluate. Iteration 0 evaluates
/// the initial config; each later iteration mutates the current best and
/// accepts the candidate iff the indicator holds and its score strictly
/// exceeds the best accepted score. When `out_dir` is non-empty the trace is
/// persisted there (trace.jsonl plus candidates/kNNNN.json snapshots).
SearchState search(const NetworkConfig& initial, const Requirements& req,
                   const Dataset& train_set, const Dataset& val_set,
                   int iterations, std::uint64_t seed,
                   const EvalOptions& options, const std::string& out_dir = "");

/// Re-derives the accept/reject sequence from a recorded log under a monotone
/// transform of u. The loop uses score ordering only, so any strictly
/// increasing transform must reproduce the recorded decisions.
std::vector<bool> replay_accept_decisions(
    const SearchState& state, const Requirements& req,
    const std::function<double(double)>& u_transform);

std::string trace_to_jsonl(const SearchState& state);

}  // namespace edgeseg
