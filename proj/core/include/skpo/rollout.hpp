#pragma once
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "skpo/credit.hpp"
#include "skpo/env.hpp"
#include "skpo/policy.hpp"

namespace skpo {

// Per-prompt average response length, maintained with the same KL-adaptive
// EMA mechanics as the value tracker. Defaults to the problem's max_len.
class LengthTracker {
 public:
  double length(const ChainProblem& p) const {
    auto it = cells_.find(p.problem_id);
    return (it == cells_.end() || !it->second.seen) ? double(p.max_len) : it->second.value;
  }

  void update(const ChainProblem& p, double mean_total_length, double d_kl) {
    if (mean_total_length <= 0.0) throw std::invalid_argument("nonpositive length observation");
    ema_update(cells_[p.problem_id], mean_total_length, d_kl, double(p.max_len));
  }

 private:
  std::unordered_map<uint32_t, EmaCell> cells_;
};

// Token-unit accounting for the rollout cost parity audit.
struct CostLedger {
  long long generated_tokens = 0;
  long long upstream_tokens = 0;
  long long downstream_tokens = 0;
  long long recomputed_prefix_tokens = 0;
  long long batch_dispatches = 0;

  CostLedger& operator+=(const CostLedger& o) {
    generated_tokens += o.generated_tokens;
    upstream_tokens += o.upstream_tokens;
    downstream_tokens += o.downstream_tokens;
    recomputed_prefix_tokens += o.recomputed_prefix_tokens;
    batch_dispatches += o.batch_dispatches;
    return *this;
  }
};

enum class DispatchMode : uint8_t { kSinglePass = 0, kTwoBatch = 1 };

// t_q ~ U{ceil(L/6), ..., floor(L/2)}, clamped to >= 1; a collapsed interval
// falls back to max(1, floor(L/2)).
int sample_split_position(double tracked_length, Rng& rng);

// Split for a slot that terminated before t_q with actual length len.
int early_stop_fallback(int actual_length);

// d(s): mean negative log-probability of the segment under the sampling
// policy (upstream rows).
double segment_deviation(const PolicyParams& policy, const ChainProblem& p,
                         const std::vector<Token>& segment);

// Index closest to the median deviation; ties go to the lowest index.
// Median is the middle element for odd G, mean of the two middle for even.
size_t select_median_segment(const std::vector<double>& deviations);

struct RolloutPlan {
  int shared_split = 0;                       // t_q
  std::vector<Trajectory> slot_segments;      // paused upstream generations
  std::vector<int> realized_splits;           // per slot, after the fallback
  std::vector<double> deviations;
  size_t selected = 0;                        // k*
  std::vector<Token> selected_segment;
  std::vector<Trajectory> downstream;         // G SKIP-conditioned trajectories
  CostLedger ledger;
};

// SKPO rollout for one problem: G upstream slots paused at t_q (with the
// early-termination fallback), median selection, then G downstream
// continuations conditioned on [s, q]. The two dispatch modes sample
// identically and differ only in the ledger's dispatch count.
RolloutPlan run_single_pass(const ChainProblem& p, const PolicyParams& policy, int group_size,
                            const LengthTracker& lengths, uint64_t seed,
                            DispatchMode mode = DispatchMode::kSinglePass,
                            int window_size = kDefaultWindowSize);

// GRPO reference rollout: G full unconditional responses.
struct GrpoRollout {
  std::vector<Trajectory> responses;
  CostLedger ledger;
};
GrpoRollout run_grpo_rollout(const ChainProblem& p, const PolicyParams& policy, int group_size,
                             uint64_t seed, int window_size = kDefaultWindowSize);

}  // namespace skpo
