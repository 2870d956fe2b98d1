#pragma once
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "skpo/env.hpp"
#include "skpo/policy.hpp"

namespace skpo {

// Constants for the KL-adaptive tracker (shared by the value and length
// trackers).
inline constexpr double kRhoMin = 0.875;
inline constexpr double kRhoMax = 0.96;
inline constexpr double kTauHalf = 8.0;
inline constexpr double kSigmaFloor = 1e-8;

// Signed outcome reward: +1 correct, -1 incorrect.
double outcome_reward(const ChainProblem& p, const Trajectory& traj);

// Monte Carlo segment reward: mean of the downstream group's signed rewards.
double upstream_reward(const std::vector<double>& downstream_rewards);

// Affine map between the signed reward space [-1, +1] and the tracker's
// [0, 1] space.
double map_reward(double r);          // [-1, +1] -> [0, 1]
double unmap_reward(double v);        // [0, 1] -> [-1, +1]

struct AdvantageBatch {
  std::vector<double> raw;
  std::vector<double> normalized;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

// (r_i - mean) / population stddev; all zeros when the spread is below the
// sigma floor (degenerate group).
AdvantageBatch group_relative_advantages(const std::vector<double>& rewards);

// Same centering/scaling applied to an upstream batch of raw advantages.
AdvantageBatch batch_normalize(const std::vector<double>& raw_advantages);

// Forgetting factor rho = clamp(2^(-d_kl / tau_half), rho_min, rho_max).
double forgetting_factor(double d_kl);

// KL-adaptive EMA state shared by the value tracker (target in [0, 1]) and
// the length tracker (target in tokens).
struct EmaCell {
  double value = 0.0;
  double count = 0.0;  // discounted cumulative observation count
  bool seen = false;
};

// Applies one EMA observation in place and returns the pre-update value
// (the default when unseen). eta = 1 / (rho * count + 1), so the first
// observation overwrites the default exactly.
double ema_update(EmaCell& cell, double observation, double d_kl, double default_value);

// Per-prompt temporal baseline in mapped [0, 1] reward space.
class ValueTracker {
 public:
  explicit ValueTracker(double default_value = 0.5) : default_(default_value) {}

  // Returns the pre-update baseline (mapped space) and applies the update.
  double update(uint32_t problem_id, double mapped_reward, double d_kl);

  // Current baseline without updating (default when unseen).
  double baseline(uint32_t problem_id) const;
  double default_value() const { return default_; }
  bool seen(uint32_t problem_id) const;
  double count(uint32_t problem_id) const;

  // Raw upstream advantage in signed space: reward - back-mapped baseline.
  double upstream_advantage(uint32_t problem_id, double reward_signed) const;

  void save(const std::string& path) const;
  static ValueTracker load(const std::string& path, double default_value = 0.5);

  const std::unordered_map<uint32_t, EmaCell>& cells() const { return cells_; }

 private:
  double default_;
  std::unordered_map<uint32_t, EmaCell> cells_;
};

// Curriculum weights: w(q) = v(1-v) + epsilon over tracker baselines,
// normalized to a probability vector.
std::vector<double> prioritized_prompt_weights(const ValueTracker& tracker,
                                               const std::vector<uint32_t>& problem_ids,
                                               double epsilon = 0.05);

}  // namespace skpo
