#pragma once
#include <unordered_map>

#include "skpo/env.hpp"
#include "skpo/policy.hpp"

namespace skpo {

// Exact probability, under the policy, that a completion from `state` is
// correct. Backward dynamic programming over (accumulated, steps_used,
// window). Pure and deterministic.
double oracle_success_prob(const ChainProblem& p, const EnvState& state,
                           const PolicyParams& policy);

// Memoizing form for repeated queries against one (problem, policy, phase).
class SuccessOracle {
 public:
  SuccessOracle(const ChainProblem& p, const PolicyParams& policy)
      : problem_(p), policy_(policy) {}

  double prob(const EnvState& state);

 private:
  const ChainProblem& problem_;
  const PolicyParams& policy_;
  std::unordered_map<uint64_t, double> memo_;
};

}  // namespace skpo
