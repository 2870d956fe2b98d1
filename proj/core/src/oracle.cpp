#include "skpo/oracle.hpp"

namespace skpo {

namespace {

uint64_t memo_key(const EnvState& s) {
  // accumulated <= 3 * max_len <= 48, steps_used <= 16, window code < 6^W.
  return (uint64_t(s.accumulated) << 40) | (uint64_t(s.steps_used) << 32) | s.window.code();
}

}  // namespace

double SuccessOracle::prob(const EnvState& state) {
  if (state.terminal(problem_))
    return outcome_of_state(problem_, state) == Outcome::kCorrect ? 1.0 : 0.0;
  // ADD tokens never decrease the sum, so overshoot is unrecoverable.
  if (state.accumulated > problem_.target) return 0.0;

  uint64_t mk = memo_key(state);
  if (auto it = memo_.find(mk); it != memo_.end()) return it->second;

  auto probs = policy_.probs(make_key(problem_.problem_id, state.window));
  double v = 0.0;
  for (int t = 0; t < kVocabSize; ++t)
    v += probs[t] * prob(step(problem_, state, Token(t)));
  memo_.emplace(mk, v);
  return v;
}

double oracle_success_prob(const ChainProblem& p, const EnvState& state,
                           const PolicyParams& policy) {
  SuccessOracle oracle(p, policy);
  return oracle.prob(state);
}

}  // namespace skpo
