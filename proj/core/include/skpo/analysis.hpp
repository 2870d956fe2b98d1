#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "skpo/env.hpp"
#include "skpo/mc_lab.hpp"
#include "skpo/policy.hpp"

namespace skpo {

// Six relative split positions spanning 1/6 to 1/2 of the reference length.
std::vector<double> default_split_grid();

struct ShortcutCell {
  CondMode strategy = CondMode::kUnconditional;
  double split_fraction = 0.0;
  double diversity = 0.0;           // mean distinct final sums per G rollouts
  double advantage_zero_rate = 0.0; // all-same-outcome probability
  double mean_response_length = 0.0;  // excluding the conditioning prefix
  long long problems = 0;           // cells contributing
  // Per-problem metrics for paired confidence tests.
  std::vector<double> per_problem_diversity;
  std::vector<double> per_problem_zero;
  std::vector<double> per_problem_length;
};

struct ShortcutReport {
  std::vector<ShortcutCell> cells;  // strategy-major, split-minor order
  const ShortcutCell& cell(CondMode strategy, size_t split_index) const;
};

struct ShortcutConfig {
  std::vector<double> split_grid = default_split_grid();
  int group_size = 8;
};

// The conditioning-strategy study: generate a reference response per
// problem, cut segments at each grid position, and sample G continuations
// per strategy. Problems whose reference is too short to cut (or whose
// segment would already be terminal for CONTINUAL) are dropped from every
// strategy at that split to keep comparisons paired.
ShortcutReport shortcut_eval(const PolicyParams& policy, const std::vector<ChainProblem>& problems,
                             const ShortcutConfig& cfg, uint64_t seed);

struct MethodPolicy {
  std::string name;
  const PolicyParams* policy = nullptr;
};

struct ProfileBinRow {
  std::string method;
  int bin = 0;
  double mean_advantage = 0.0;
  long long cells = 0;
};

struct AdvantageProfileConfig {
  int rollouts_per_problem = 8;
  int eval_policy_index = -1;  // -1: strongest by Mean@32 over the problems
};

// Inter-method relative advantages over correct responses, binned by
// relative position; segment rewards come from the exact oracle under the
// evaluation policy. (problem, bin) cells missing any method are dropped.
std::vector<ProfileBinRow> advantage_profile(const std::vector<MethodPolicy>& methods,
                                             const std::vector<ChainProblem>& problems,
                                             const AdvantageProfileConfig& cfg, uint64_t seed);

}  // namespace skpo
