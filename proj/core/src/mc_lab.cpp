#include "skpo/mc_lab.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "skpo/parallel.hpp"

namespace skpo {

double mc_token_reward(const ChainProblem& p, const PolicyParams& policy,
                       const Trajectory& traj, size_t position, int k, uint64_t seed) {
  if (k < 1) throw std::invalid_argument("K must be >= 1");
  if (position > traj.tokens.size()) throw std::out_of_range("position past trajectory end");
  if (position == traj.tokens.size() && traj.terminal(p))
    return outcome_reward(p, traj);  // no remaining uncertainty
  EnvState prefix = state_at(p, traj, position);
  Rng rng(seed);
  double sum = 0.0;
  for (int i = 0; i < k; ++i)
    sum += sample_completion_outcome(policy, p, prefix, rng) == Outcome::kCorrect
               ? 1.0
               : -1.0;
  return sum / double(k);
}

std::vector<double> SignExperimentConfig::true_probs() const {
  std::vector<double> ps(size_t(group_size), 0.0);
  for (int i = 0; i < group_size; ++i) {
    double frac = group_size > 1 ? double(i) / double(group_size - 1) : 0.5;
    ps[size_t(i)] = std::clamp(center - spread + 2.0 * spread * frac, 0.0, 1.0);
  }
  return ps;
}

double sign_accuracy_experiment(const SignExperimentConfig& cfg, uint64_t seed) {
  if (cfg.trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (cfg.samples < 1) throw std::invalid_argument("N must be >= 1");
  auto probs = cfg.true_probs();
  for (double p : probs)
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("p outside [0, 1]");

  std::vector<double> signed_truth(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) signed_truth[i] = 2.0 * probs[i] - 1.0;
  auto truth = group_relative_advantages(signed_truth);

  std::vector<uint8_t> correct(size_t(cfg.trials));
  parallel_for(size_t(cfg.trials), cfg.workers, [&](size_t trial) {
    Rng rng(derive_seed(seed, 0x5349474eull /*SIGN*/, trial));
    std::vector<double> estimates(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) {
      int hits = rng.next_binomial(cfg.samples, probs[i]);
      estimates[i] = 2.0 * double(hits) / double(cfg.samples) - 1.0;
    }
    auto est = group_relative_advantages(estimates);
    bool all_match = true;
    for (size_t i = 0; i < probs.size(); ++i) {
      if (advantage_sign(est.normalized[i], cfg.tol_zero) !=
          advantage_sign(truth.normalized[i], cfg.tol_zero)) {
        all_match = false;
        break;
      }
    }
    correct[trial] = all_match ? 1 : 0;
  });

  long long hits = 0;
  for (uint8_t c : correct) hits += c;
  return double(hits) / double(cfg.trials);
}

TokenRewardProfile correctness_distribution_profile(const ChainProblem& p,
                                                    const PolicyParams& policy,
                                                    const std::vector<Trajectory>& bundle,
                                                    int expect_correct, int k, uint64_t seed,
                                                    double tol_zero) {
  int g = int(bundle.size());
  if (g < 2) throw std::invalid_argument("bundle must have >= 2 trajectories");
  std::vector<double> outcomes;
  int correct = 0;
  for (const auto& t : bundle) {
    double r = outcome_reward(p, t);
    outcomes.push_back(r);
    if (r > 0.0) ++correct;
  }
  if (correct != expect_correct)
    throw std::invalid_argument("bundle correctness count does not match pattern");

  TokenRewardProfile prof;
  prof.correct_count = correct;
  auto grpo = group_relative_advantages(outcomes);

  SuccessOracle oracle(p, policy);
  Rng rng(derive_seed(seed, 0x50524f46ull /*PROF*/));

  for (int b = 0; b < kPositionBins; ++b) {
    std::vector<double> truth(size_t(g), 0.0);
    std::vector<double> est(size_t(g), 0.0);
    for (int i = 0; i < g; ++i) {
      const auto& traj = bundle[size_t(i)];
      size_t pos = bin_position(b, traj.length());
      if (pos == traj.length()) {
        double r = outcomes[size_t(i)];
        truth[size_t(i)] = r;
        est[size_t(i)] = r;
      } else {
        double pv = oracle.prob(state_at(p, traj, pos));
        truth[size_t(i)] = 2.0 * pv - 1.0;
        est[size_t(i)] = 2.0 * double(rng.next_binomial(k, pv)) / double(k) - 1.0;
      }
    }
    auto adv_true = group_relative_advantages(truth);
    auto adv_mc = group_relative_advantages(est);

    double mc_sign = 0.0, grpo_sign = 0.0, mc_mae = 0.0, grpo_mae = 0.0;
    for (int i = 0; i < g; ++i) {
      int ts = advantage_sign(adv_true.normalized[size_t(i)], tol_zero);
      mc_sign += advantage_sign(adv_mc.normalized[size_t(i)], tol_zero) == ts ? 1.0 : 0.0;
      grpo_sign += advantage_sign(grpo.normalized[size_t(i)], tol_zero) == ts ? 1.0 : 0.0;
      mc_mae += std::abs(adv_mc.normalized[size_t(i)] - adv_true.normalized[size_t(i)]);
      grpo_mae += std::abs(grpo.normalized[size_t(i)] - adv_true.normalized[size_t(i)]);
    }
    prof.true_rewards.push_back(truth);
    prof.mc_estimates.push_back(est);
    prof.true_advantages.push_back(adv_true.normalized);
    prof.mc_advantages.push_back(adv_mc.normalized);
    prof.grpo_advantages.push_back(grpo.normalized);
    prof.mc_sign_accuracy.push_back(mc_sign / g);
    prof.grpo_sign_accuracy.push_back(grpo_sign / g);
    prof.mc_mae.push_back(mc_mae / g);
    prof.grpo_mae.push_back(grpo_mae / g);
  }
  return prof;
}

namespace {

struct GroupCase {
  const ChainProblem* problem;
  std::vector<Trajectory> trajs;
  std::vector<double> outcomes;
  // Oracle success probability per (member, position); positions are each
  // member's own token indices 0..len-1 (final position handled as outcome).
  std::vector<std::vector<double>> probs;
};

}  // namespace

std::vector<KSweepRow> k_sweep(const std::vector<ChainProblem>& problems,
                               const PolicyParams& policy, const KSweepConfig& cfg,
                               uint64_t seed) {
  if (cfg.k_values.empty()) throw std::invalid_argument("empty K list");

  // Build oracle-backed groups once; every K row reuses the same groups.
  std::vector<GroupCase> groups;
  ConditioningContext ctx;
  ctx.mode = CondMode::kUnconditional;
  ctx.phase = Phase::kDownstream;
  for (const auto& p : problems) {
    GroupCase gc;
    gc.problem = &p;
    int correct = 0;
    for (int i = 0; i < cfg.group_size; ++i) {
      Trajectory t =
          sample_trajectory(policy, p, ctx, derive_seed(seed, 0x4b53ull /*KS*/, p.problem_id, uint64_t(i)));
      double r = outcome_reward(p, t);
      if (r > 0.0) ++correct;
      gc.outcomes.push_back(r);
      gc.trajs.push_back(std::move(t));
    }
    if (cfg.mixed_groups_only && (correct == 0 || correct == cfg.group_size)) continue;
    SuccessOracle oracle(p, policy);
    for (const auto& t : gc.trajs) {
      std::vector<double> ps;
      for (size_t pos = 0; pos < t.length(); ++pos)
        ps.push_back(oracle.prob(state_at(p, t, pos)));
      gc.probs.push_back(std::move(ps));
    }
    groups.push_back(std::move(gc));
  }
  if (groups.empty()) throw std::runtime_error("no groups matched the requested pattern");

  size_t max_positions = 0;
  for (const auto& gc : groups)
    for (const auto& t : gc.trajs) max_positions = std::max(max_positions, t.length() + 1);

  std::vector<KSweepRow> rows;
  struct Accum {
    double sign_hits = 0.0, abs_err = 0.0, sq_err = 0.0;
    long long cells = 0;
  };

  for (int k : cfg.k_values) {
    std::vector<Accum> per_group(groups.size());
    parallel_for(groups.size(), cfg.workers, [&](size_t gi) {
      const GroupCase& gc = groups[gi];
      Accum& acc = per_group[gi];
      int g = cfg.group_size;
      for (int trial = 0; trial < cfg.trials_per_group; ++trial) {
        Rng rng(derive_seed(seed, 0x4b5357ull /*KSW*/, (uint64_t(gi) << 20) | uint64_t(trial),
                            uint64_t(k)));
        // Position 0 (empty prefix) is excluded: all members share it, so the
        // true group is degenerate there and normalized estimates are pure
        // amplified noise rather than a credit-assignment measurement.
        for (size_t pos = 1; pos < max_positions; ++pos) {
          std::vector<double> truth(size_t(g), 0.0);
          std::vector<double> est(size_t(g), 0.0);
          for (int i = 0; i < g; ++i) {
            size_t len = gc.trajs[size_t(i)].length();
            size_t clamped = std::min(pos, len);
            if (clamped == len) {
              truth[size_t(i)] = gc.outcomes[size_t(i)];
              est[size_t(i)] = gc.outcomes[size_t(i)];
            } else {
              double pv = gc.probs[size_t(i)][clamped];
              truth[size_t(i)] = 2.0 * pv - 1.0;
              est[size_t(i)] = 2.0 * double(rng.next_binomial(k, pv)) / double(k) - 1.0;
            }
          }
          auto adv_true = group_relative_advantages(truth);
          auto adv_mc = group_relative_advantages(est);
          for (int i = 0; i < g; ++i) {
            double t = adv_true.normalized[size_t(i)];
            double e = adv_mc.normalized[size_t(i)];
            acc.sign_hits +=
                advantage_sign(e, cfg.tol_zero) == advantage_sign(t, cfg.tol_zero) ? 1.0 : 0.0;
            acc.abs_err += std::abs(e - t);
            acc.sq_err += (e - t) * (e - t);
            acc.cells += 1;
          }
        }
      }
    });
    Accum total;
    for (const auto& a : per_group) {
      total.sign_hits += a.sign_hits;
      total.abs_err += a.abs_err;
      total.sq_err += a.sq_err;
      total.cells += a.cells;
    }
    KSweepRow row;
    row.k = k;
    row.cells = total.cells;
    row.sign_accuracy = total.sign_hits / double(total.cells);
    row.mae = total.abs_err / double(total.cells);
    row.variance = total.sq_err / double(total.cells);
    rows.push_back(row);
  }

  // GRPO broadcast reference: the outcome-level group advantage at every
  // position, independent of K.
  {
    Accum total;
    for (const auto& gc : groups) {
      auto grpo = group_relative_advantages(gc.outcomes);
      for (size_t pos = 1; pos < max_positions; ++pos) {
        std::vector<double> truth(size_t(cfg.group_size));
        for (int i = 0; i < cfg.group_size; ++i) {
          size_t len = gc.trajs[size_t(i)].length();
          size_t clamped = std::min(pos, len);
          truth[size_t(i)] = clamped == len ? gc.outcomes[size_t(i)]
                                            : 2.0 * gc.probs[size_t(i)][clamped] - 1.0;
        }
        auto adv_true = group_relative_advantages(truth);
        for (int i = 0; i < cfg.group_size; ++i) {
          double t = adv_true.normalized[size_t(i)];
          double e = grpo.normalized[size_t(i)];
          total.sign_hits +=
              advantage_sign(e, cfg.tol_zero) == advantage_sign(t, cfg.tol_zero) ? 1.0 : 0.0;
          total.abs_err += std::abs(e - t);
          total.sq_err += (e - t) * (e - t);
          total.cells += 1;
        }
      }
    }
    KSweepRow row;
    row.k = 0;
    row.cells = total.cells;
    row.sign_accuracy = total.sign_hits / double(total.cells);
    row.mae = total.abs_err / double(total.cells);
    row.variance = total.sq_err / double(total.cells);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace skpo
