#include "skpo/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace skpo {

int sample_split_position(double tracked_length, Rng& rng) {
  int low = std::max(1, int(std::ceil(tracked_length / 6.0)));
  int high = std::max(1, int(std::floor(tracked_length / 2.0)));
  if (low > high) return std::max(1, int(std::floor(tracked_length / 2.0)));
  return low + int(rng.next_below(uint64_t(high - low + 1)));
}

int early_stop_fallback(int actual_length) {
  if (actual_length < 1) throw std::invalid_argument("segment length must be >= 1");
  return std::max(1, actual_length / 2);
}

double segment_deviation(const PolicyParams& policy, const ChainProblem& p,
                         const std::vector<Token>& segment) {
  if (segment.empty()) throw std::invalid_argument("empty segment");
  EnvState s = initial_state(p);
  double total = 0.0;
  for (Token t : segment) {
    total -= policy.log_prob(make_key(p.problem_id, s.window), t);
    s.window.push(uint8_t(t));  // context only; deviation ignores env termination
    s.accumulated += token_increment(t);
  }
  return total / double(segment.size());
}

size_t select_median_segment(const std::vector<double>& deviations) {
  if (deviations.empty()) throw std::invalid_argument("no deviations");
  std::vector<double> sorted = deviations;
  std::sort(sorted.begin(), sorted.end());
  size_t n = sorted.size();
  double median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  size_t best = 0;
  double best_dist = std::abs(deviations[0] - median);
  for (size_t i = 1; i < n; ++i) {
    double dist = std::abs(deviations[i] - median);
    if (dist < best_dist) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

RolloutPlan run_single_pass(const ChainProblem& p, const PolicyParams& policy, int group_size,
                            const LengthTracker& lengths, uint64_t seed, DispatchMode mode,
                            int window_size) {
  if (group_size < 1) throw std::invalid_argument("group size must be >= 1");
  RolloutPlan plan;

  Rng split_rng(derive_seed(seed, /*label=*/1));
  plan.shared_split = sample_split_position(lengths.length(p), split_rng);

  // Phase I: G parallel upstream generations paused at t_q.
  ConditioningContext up_ctx;
  up_ctx.mode = CondMode::kUnconditional;
  up_ctx.phase = Phase::kUpstream;
  up_ctx.window_size = window_size;
  for (int k = 0; k < group_size; ++k) {
    Trajectory slot = sample_trajectory(policy, p, up_ctx, derive_seed(seed, 2, uint64_t(k)),
                                        /*max_tokens=*/plan.shared_split);
    plan.ledger.upstream_tokens += (long long)slot.tokens.size();
    int len = int(slot.tokens.size());
    // Slots that terminated before t_q split at half their realized length.
    int split = (slot.terminal(p) && len < plan.shared_split) ? early_stop_fallback(len)
                                                              : plan.shared_split;
    plan.realized_splits.push_back(split);
    std::vector<Token> segment(slot.tokens.begin(), slot.tokens.begin() + split);
    plan.deviations.push_back(segment_deviation(policy, p, segment));
    plan.slot_segments.push_back(std::move(slot));
  }

  plan.selected = select_median_segment(plan.deviations);
  const Trajectory& chosen = plan.slot_segments[plan.selected];
  int split = plan.realized_splits[plan.selected];
  plan.selected_segment.assign(chosen.tokens.begin(), chosen.tokens.begin() + split);

  // Phase II: G downstream continuations, all conditioned on [s, q].
  ConditioningContext down_ctx;
  down_ctx.mode = CondMode::kSkip;
  down_ctx.phase = Phase::kDownstream;
  down_ctx.segment = plan.selected_segment;
  down_ctx.window_size = window_size;
  for (int i = 0; i < group_size; ++i) {
    Trajectory o = sample_trajectory(policy, p, down_ctx, derive_seed(seed, 3, uint64_t(i)));
    plan.ledger.downstream_tokens += (long long)o.tokens.size();
    plan.downstream.push_back(std::move(o));
  }

  plan.ledger.generated_tokens = plan.ledger.upstream_tokens + plan.ledger.downstream_tokens;
  // Prefix reorder recomputation: |s| plus the problem statement (one unit).
  plan.ledger.recomputed_prefix_tokens = (long long)plan.selected_segment.size() + 1;
  plan.ledger.batch_dispatches = (mode == DispatchMode::kSinglePass) ? 1 : 2;
  return plan;
}

GrpoRollout run_grpo_rollout(const ChainProblem& p, const PolicyParams& policy, int group_size,
                             uint64_t seed, int window_size) {
  if (group_size < 1) throw std::invalid_argument("group size must be >= 1");
  GrpoRollout out;
  ConditioningContext ctx;
  ctx.mode = CondMode::kUnconditional;
  ctx.phase = Phase::kDownstream;
  ctx.window_size = window_size;
  for (int i = 0; i < group_size; ++i) {
    Trajectory o = sample_trajectory(policy, p, ctx, derive_seed(seed, 4, uint64_t(i)));
    out.ledger.downstream_tokens += (long long)o.tokens.size();
    out.responses.push_back(std::move(o));
  }
  out.ledger.generated_tokens = out.ledger.downstream_tokens;
  out.ledger.batch_dispatches = 1;
  return out;
}

}  // namespace skpo
