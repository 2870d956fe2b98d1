#pragma once
#include <cstdint>
#include <vector>

#include "skpo/credit.hpp"
#include "skpo/env.hpp"
#include "skpo/oracle.hpp"
#include "skpo/policy.hpp"

namespace skpo {

// Three-valued sign with a tolerance band for ground-truth-zero advantages.
inline constexpr double kDefaultTolZero = 0.05;
inline int advantage_sign(double a, double tol_zero = kDefaultTolZero) {
  if (a > tol_zero) return 1;
  if (a < -tol_zero) return -1;
  return 0;
}

// Monte Carlo token reward: mean outcome reward of K continuations sampled
// from the trajectory's prefix o_{1:t}. At the trajectory end this is the
// binary outcome itself.
double mc_token_reward(const ChainProblem& p, const PolicyParams& policy,
                       const Trajectory& traj, size_t position, int k, uint64_t seed);

struct SignExperimentConfig {
  int group_size = 8;       // G
  int samples = 8;          // N continuations per prefix
  double center = 0.5;      // mean of the true success probabilities
  double spread = 0.05;     // half-range of the p_i around the center
  long long trials = 100000;
  double tol_zero = kDefaultTolZero;
  int workers = 1;

  // p_i evenly spaced across [center - spread, center + spread], clamped to
  // [0, 1]; degenerate spread gives all-equal probabilities.
  std::vector<double> true_probs() const;
};

// Probability that all G estimated advantage signs match the ground-truth
// signs, over Bernoulli-sampled reward estimates (the environment-free
// abstraction of the continuation sampling).
double sign_accuracy_experiment(const SignExperimentConfig& cfg, uint64_t seed);

// Per-position metrics for a bundle of G trajectories on one problem.
struct TokenRewardProfile {
  int correct_count = 0;  // m of G
  // Indexed [bin][member]; 100 relative-position bins.
  std::vector<std::vector<double>> true_rewards;
  std::vector<std::vector<double>> mc_estimates;
  std::vector<std::vector<double>> true_advantages;
  std::vector<std::vector<double>> mc_advantages;
  std::vector<std::vector<double>> grpo_advantages;
  std::vector<double> mc_sign_accuracy;    // per bin
  std::vector<double> grpo_sign_accuracy;  // per bin
  std::vector<double> mc_mae;              // per bin, vs true advantages
  std::vector<double> grpo_mae;
};

inline constexpr int kPositionBins = 100;

// Maps relative bin b of a length-len trajectory to a token position.
// Bin 0 is the empty prefix and the last bin is the terminal position.
inline size_t bin_position(int b, size_t len) {
  return std::min(len, size_t(b) * len / (kPositionBins - 1));
}

// Oracle-grounded profile for a group with exactly `expect_correct` correct
// members. MC estimates use Bernoulli draws against the oracle success
// probability at each prefix; GRPO broadcasts the outcome-level group
// advantage to every position.
TokenRewardProfile correctness_distribution_profile(const ChainProblem& p,
                                                    const PolicyParams& policy,
                                                    const std::vector<Trajectory>& bundle,
                                                    int expect_correct, int k, uint64_t seed,
                                                    double tol_zero = kDefaultTolZero);

struct KSweepRow {
  int k = 0;               // 0 marks the GRPO reference row
  double sign_accuracy = 0.0;
  double mae = 0.0;
  double variance = 0.0;   // variance of the advantage estimates around truth
  long long cells = 0;     // (group, position, member) count aggregated
};

struct KSweepConfig {
  std::vector<int> k_values = {8, 64, 512, 4096, 8192};
  int group_size = 8;
  int trials_per_group = 8;  // binomial resamples per (group, position)
  bool mixed_groups_only = true;  // keep only 1..G-1 correct patterns
  double tol_zero = kDefaultTolZero;
  int workers = 1;
};

// Sweeps the continuation budget K over oracle-backed groups sampled from
// the problems; the last row is the GRPO broadcast reference.
std::vector<KSweepRow> k_sweep(const std::vector<ChainProblem>& problems,
                               const PolicyParams& policy, const KSweepConfig& cfg,
                               uint64_t seed);

}  // namespace skpo
