#pragma once
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "skpo/env.hpp"
#include "skpo/rng.hpp"

namespace skpo {

// Provenance marker: whether a trajectory is an upstream segment or a
// downstream response. Parameter rows are shared across phases, as the two
// phases share one model; their conditioning streams already differ through
// the window contents (where the problem marker sits and whether segment
// tokens precede it), so upstream contexts and early skip-conditioned
// downstream contexts land on distinct rows while a downstream window made
// purely of self-generated tokens is the same row under any strategy.
enum class Phase : uint8_t { kUpstream = 0, kDownstream = 1 };

enum class CondMode : uint8_t { kUnconditional = 0, kContinual = 1, kSkip = 2 };

// Packed (problem tag, window) row key.
using ContextKey = uint64_t;

inline ContextKey make_key(uint32_t problem_id, const ContextWindow& w) {
  return (uint64_t(problem_id) << 32) | w.code();
}

struct ConditioningContext {
  CondMode mode = CondMode::kUnconditional;
  Phase phase = Phase::kDownstream;
  std::vector<Token> segment;  // used by kContinual and kSkip
  int window_size = kDefaultWindowSize;
};

struct Trajectory {
  std::vector<Token> tokens;       // generated tokens only (no conditioning prefix)
  std::vector<double> log_probs;   // under the sampling policy
  std::vector<ContextKey> keys;    // row visited when each token was sampled
  EnvState init_state;             // state before the first generated token
  EnvState final_state;
  uint32_t problem_id = 0;
  Phase phase = Phase::kDownstream;
  CondMode mode = CondMode::kUnconditional;
  // Conditioning prefix as window symbols, for shared-prefix identity checks.
  std::vector<uint8_t> prefix_syms;

  bool terminal(const ChainProblem& p) const { return final_state.terminal(p); }
  size_t length() const { return tokens.size(); }
};

class PolicyParams {
 public:
  using Row = std::array<double, kVocabSize>;

  // Unseen rows behave as all-zero logits (uniform distribution).
  Row logits(ContextKey key) const {
    auto it = table_.find(key);
    return it == table_.end() ? Row{0.0, 0.0, 0.0, 0.0} : it->second;
  }
  Row& mutable_row(ContextKey key) { return table_[key]; }
  bool has_row(ContextKey key) const { return table_.count(key) != 0; }
  size_t row_count() const { return table_.size(); }
  const std::unordered_map<ContextKey, Row>& table() const { return table_; }

  Row probs(ContextKey key) const { return softmax(logits(key)); }
  double log_prob(ContextKey key, Token t) const;

  uint64_t snapshot_id() const { return snapshot_id_; }
  void bump_snapshot() { ++snapshot_id_; }
  void set_snapshot_id(uint64_t id) { snapshot_id_ = id; }

  static Row softmax(const Row& logits);

 private:
  std::unordered_map<ContextKey, Row> table_;
  uint64_t snapshot_id_ = 0;
};

// Builds the state a generation starts from, per conditioning strategy:
//  - kUnconditional: fresh state, window [PAD.., PROBLEM].
//  - kSkip: fresh state and budget, window is the tail of [segment.., PROBLEM].
//  - kContinual: the segment replayed through the environment (budget consumed).
EnvState conditioning_start_state(const ChainProblem& p, const ConditioningContext& ctx);

// Conditioning prefix as a symbol sequence (what precedes generated tokens
// in the context stream).
std::vector<uint8_t> conditioning_prefix_syms(const ConditioningContext& ctx);

// Samples to termination (or for at most max_tokens generated tokens, in
// which case the trajectory may be non-terminal). Deterministic per seed.
Trajectory sample_trajectory(const PolicyParams& policy, const ChainProblem& p,
                             const ConditioningContext& ctx, uint64_t seed,
                             int max_tokens = -1);

// Continues sampling from an intermediate state to termination and reports
// the result; used by Monte Carlo continuation estimates.
Outcome sample_completion_outcome(const PolicyParams& policy, const ChainProblem& p,
                                  const EnvState& from, Rng& rng);

// Pure recomputation of per-token log-probabilities for a trajectory.
std::vector<double> log_prob(const PolicyParams& policy, const ChainProblem& p,
                             const Trajectory& traj);

// d log pi(token | row) / d logits = one_hot(token) - softmax(row).
PolicyParams::Row grad_log_prob(const PolicyParams& policy, ContextKey key, Token t);

// Mean per-row KL(p || q) over the supplied visitation sample of row keys;
// exact per-row summation.
double kl_divergence(const PolicyParams& p, const PolicyParams& q,
                     std::span<const ContextKey> visitation);

// Mean per-row Shannon entropy over the supplied visitation sample.
double entropy(const PolicyParams& policy, std::span<const ContextKey> visitation);

// Versioned checkpoint: snapshot id plus sorted (key, logits row) records.
void save_policy(const std::string& path, const PolicyParams& policy);
PolicyParams load_policy(const std::string& path);

// Replays a trajectory and returns the state after its first n tokens.
EnvState state_at(const ChainProblem& p, const Trajectory& traj, size_t n);

}  // namespace skpo
