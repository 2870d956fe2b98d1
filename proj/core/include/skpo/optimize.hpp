#pragma once
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "skpo/credit.hpp"
#include "skpo/env.hpp"
#include "skpo/policy.hpp"
#include "skpo/rollout.hpp"

namespace skpo {

struct StepConfig {
  int group_size = 8;          // G
  int prompts_per_step = 128;  // B
  int mini_batches = 4;
  double clip_eps = 0.2;              // symmetric clip for the upstream surrogate
  double down_clip_low = 0.8;         // downstream coefficient clip range
  double down_clip_high = 1.28;       // Clip-Higher ceiling
  double w_up = 0.5;
  double w_down = 0.5;
  double kl_penalty = 0.0;            // beta, kept at 0
  double entropy_coeff = 0.0;         // alpha_ent, kept at 0
  double learning_rate = 0.05;
  int eval_rollouts = 32;             // Mean@32 analog
  int eval_every = 1;
};

// Sparse logit-gradient table keyed like the policy.
class GradientAccumulator {
 public:
  void add(ContextKey key, const PolicyParams::Row& g, double scale) {
    auto& row = table_[key];
    for (int i = 0; i < kVocabSize; ++i) row[i] += scale * g[i];
  }
  void add_scaled(const GradientAccumulator& o, double scale) {
    for (const auto& [k, row] : o.table_) {
      auto& dst = table_[k];
      for (int i = 0; i < kVocabSize; ++i) dst[i] += scale * row[i];
    }
  }
  const std::unordered_map<ContextKey, PolicyParams::Row>& table() const { return table_; }
  // Ascent step applied in sorted-key order for determinism.
  void apply(PolicyParams& policy, double learning_rate) const;

 private:
  std::unordered_map<ContextKey, PolicyParams::Row> table_;
};

struct TrajectoryGroup {
  const ChainProblem* problem = nullptr;
  std::vector<Trajectory> trajectories;
  std::vector<double> advantages;  // one scalar per trajectory
};

// Eq.-style downstream objective: stop-gradient clipped coefficient times
// log-prob, token-mean over the group's total token count; gradient flows
// only through log pi_theta.
std::pair<double, GradientAccumulator> downstream_objective_grad(
    const PolicyParams& policy, const std::vector<TrajectoryGroup>& groups,
    const StepConfig& cfg);

// Upstream clipped surrogate: min(r A, clip(r) A), per-sequence token mean,
// batch mean; the unclipped branch carries the true gradient through r.
std::pair<double, GradientAccumulator> upstream_objective_grad(
    const PolicyParams& policy, const std::vector<TrajectoryGroup>& segments,
    const StepConfig& cfg);

enum class TrainMode : uint8_t { kSkpo = 0, kGrpo = 1, kSpo = 2 };
TrainMode parse_train_mode(const std::string& s);
std::string train_mode_name(TrainMode m);

struct StepLog {
  int step = 0;
  TrainMode mode = TrainMode::kSkpo;
  double mean_acc = -1.0;  // -1 when evaluation was skipped this step
  double entropy = 0.0;
  double upstream_obj = 0.0;
  double downstream_obj = 0.0;
  double adv_zero_rate = 0.0;
  long long generated_tokens = 0;
  long long dispatches = 0;
};

struct TrainResult {
  PolicyParams policy;
  ValueTracker value_tracker;
  std::vector<StepLog> log;
  long long total_generated_tokens = 0;
};

struct TrainOptions {
  TrainMode mode = TrainMode::kSkpo;
  int steps = 100;
  uint64_t seed = 0;
  DispatchMode dispatch = DispatchMode::kSinglePass;
  // Optional cap: stop once the cumulative generated-token budget is reached
  // (checked after each step); <= 0 means no cap.
  long long token_budget = 0;
};

TrainResult train(const std::vector<ChainProblem>& dataset, const StepConfig& cfg,
                  const TrainOptions& opts);

// Mean accuracy over `rollouts` fresh unconditional samples per problem.
double evaluate_mean_accuracy(const PolicyParams& policy, const std::vector<ChainProblem>& dataset,
                              int rollouts, uint64_t seed);

}  // namespace skpo
