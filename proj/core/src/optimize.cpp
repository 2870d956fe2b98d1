#include "skpo/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "skpo/oracle.hpp"

namespace skpo {

void GradientAccumulator::apply(PolicyParams& policy, double learning_rate) const {
  std::vector<ContextKey> keys;
  keys.reserve(table_.size());
  for (const auto& [k, _] : table_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (ContextKey k : keys) {
    const auto& g = table_.at(k);
    auto& row = policy.mutable_row(k);
    for (int i = 0; i < kVocabSize; ++i) row[i] += learning_rate * g[i];
  }
}

std::pair<double, GradientAccumulator> downstream_objective_grad(
    const PolicyParams& policy, const std::vector<TrajectoryGroup>& groups,
    const StepConfig& cfg) {
  double objective = 0.0;
  GradientAccumulator grad;
  for (const auto& group : groups) {
    if (group.trajectories.size() != group.advantages.size())
      throw std::invalid_argument("group advantage count mismatch");
    size_t total_tokens = 0;
    for (const auto& t : group.trajectories) total_tokens += t.tokens.size();
    if (total_tokens == 0) continue;
    double inv = 1.0 / double(total_tokens);
    double group_obj = 0.0;
    for (size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& t = group.trajectories[i];
      double adv = group.advantages[i];
      for (size_t j = 0; j < t.tokens.size(); ++j) {
        double lp_new = policy.log_prob(t.keys[j], t.tokens[j]);
        double ratio = std::exp(lp_new - t.log_probs[j]);
        // Stop-gradient: the clipped ratio times the advantage is a constant
        // coefficient; only log pi_theta carries gradient.
        double coef = std::clamp(ratio, cfg.down_clip_low, cfg.down_clip_high) * adv;
        group_obj += coef * lp_new;
        if (coef != 0.0)
          grad.add(t.keys[j], grad_log_prob(policy, t.keys[j], t.tokens[j]), coef * inv / double(groups.size()));
      }
    }
    objective += group_obj * inv;
  }
  objective /= double(groups.size());
  return {objective, std::move(grad)};
}

std::pair<double, GradientAccumulator> upstream_objective_grad(
    const PolicyParams& policy, const std::vector<TrajectoryGroup>& segments,
    const StepConfig& cfg) {
  double objective = 0.0;
  GradientAccumulator grad;
  size_t n = 0;
  for (const auto& seg : segments) n += seg.trajectories.size();
  if (n == 0) throw std::invalid_argument("no upstream segments");
  for (const auto& seg : segments) {
    for (size_t i = 0; i < seg.trajectories.size(); ++i) {
      const Trajectory& t = seg.trajectories[i];
      if (t.tokens.empty()) throw std::invalid_argument("empty upstream segment");
      double adv = seg.advantages[i];
      double inv = 1.0 / double(t.tokens.size());
      double seq_obj = 0.0;
      for (size_t j = 0; j < t.tokens.size(); ++j) {
        double lp_new = policy.log_prob(t.keys[j], t.tokens[j]);
        double ratio = std::exp(lp_new - t.log_probs[j]);
        double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        double unclipped_term = ratio * adv;
        double clipped_term = clipped * adv;
        seq_obj += std::min(unclipped_term, clipped_term);
        // Gradient follows the active branch; the clipped branch is constant.
        if (unclipped_term <= clipped_term && adv != 0.0)
          grad.add(t.keys[j], grad_log_prob(policy, t.keys[j], t.tokens[j]),
                   adv * ratio * inv / double(n));
      }
      objective += seq_obj * inv;
    }
  }
  objective /= double(n);
  return {objective, std::move(grad)};
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "skpo" || s == "SKPO") return TrainMode::kSkpo;
  if (s == "grpo" || s == "GRPO") return TrainMode::kGrpo;
  if (s == "spo" || s == "SPO") return TrainMode::kSpo;
  throw std::invalid_argument("invalid train mode: " + s);
}

std::string train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kSkpo: return "skpo";
    case TrainMode::kGrpo: return "grpo";
    case TrainMode::kSpo: return "spo";
  }
  return "?";
}

double evaluate_mean_accuracy(const PolicyParams& policy, const std::vector<ChainProblem>& dataset,
                              int rollouts, uint64_t seed) {
  ConditioningContext ctx;
  ctx.mode = CondMode::kUnconditional;
  ctx.phase = Phase::kDownstream;
  double total = 0.0;
  for (const auto& p : dataset) {
    int correct = 0;
    for (int i = 0; i < rollouts; ++i) {
      Trajectory t = sample_trajectory(policy, p, ctx,
                                       derive_seed(seed, 0x4556ull /*EV*/, p.problem_id, uint64_t(i)));
      if (outcome_of_state(p, t.final_state) == Outcome::kCorrect) ++correct;
    }
    total += double(correct) / double(rollouts);
  }
  return total / double(dataset.size());
}

namespace {

std::vector<ContextKey> sorted_unique_keys(const std::vector<ContextKey>& keys) {
  std::vector<ContextKey> out = keys;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Weighted draw over dataset indices.
size_t draw_index(const std::vector<double>& weights, Rng& rng) {
  double u = rng.next_double();
  double acc = 0.0;
  for (size_t i = 0; i + 1 < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

Trajectory truncate_segment(const Trajectory& slot, int split) {
  Trajectory seg = slot;
  seg.tokens.assign(slot.tokens.begin(), slot.tokens.begin() + split);
  seg.log_probs.assign(slot.log_probs.begin(), slot.log_probs.begin() + split);
  seg.keys.assign(slot.keys.begin(), slot.keys.begin() + split);
  return seg;
}

}  // namespace

TrainResult train(const std::vector<ChainProblem>& dataset, const StepConfig& cfg,
                  const TrainOptions& opts) {
  if (dataset.empty()) throw std::invalid_argument("empty dataset");
  TrainResult result;
  PolicyParams& policy = result.policy;
  ValueTracker& tracker = result.value_tracker;
  LengthTracker lengths;
  PolicyParams prev_step_policy = policy;  // policy at the previous step's rollouts

  std::vector<uint32_t> ids;
  for (const auto& p : dataset) ids.push_back(p.problem_id);

  for (int step_idx = 0; step_idx < opts.steps; ++step_idx) {
    uint64_t step_seed = derive_seed(opts.seed, 0x53544550ull /*STEP*/, uint64_t(step_idx));
    Rng batch_rng(derive_seed(step_seed, 1));

    // Prompt selection: prioritized for the tracker-based methods, uniform
    // for GRPO.
    int prompts = cfg.prompts_per_step;
    if (opts.mode == TrainMode::kSpo) prompts *= cfg.group_size;  // cost-matched scaling
    std::vector<size_t> batch;
    if (opts.mode == TrainMode::kGrpo) {
      for (int b = 0; b < prompts; ++b)
        batch.push_back(size_t(batch_rng.next_below(dataset.size())));
    } else {
      auto weights = prioritized_prompt_weights(tracker, ids);
      for (int b = 0; b < prompts; ++b) batch.push_back(draw_index(weights, batch_rng));
    }

    // Rollouts under the current policy (this is pi_old for the step).
    std::vector<TrajectoryGroup> down_groups;
    std::vector<TrajectoryGroup> up_segments;
    std::vector<double> upstream_rewards_signed;   // per prompt, SKPO/SPO
    std::vector<uint32_t> upstream_problem_ids;
    std::vector<ContextKey> visited;
    CostLedger step_ledger;
    int degenerate_groups = 0;
    int group_count = 0;
    std::vector<double> mean_total_lengths;  // per SKPO prompt, for the length tracker

    for (size_t b = 0; b < batch.size(); ++b) {
      const ChainProblem& p = dataset[batch[b]];
      uint64_t rollout_seed = derive_seed(step_seed, 2, uint64_t(b));
      if (opts.mode == TrainMode::kSkpo) {
        RolloutPlan plan = run_single_pass(p, policy, cfg.group_size, lengths, rollout_seed,
                                           opts.dispatch);
        step_ledger += plan.ledger;
        std::vector<double> rewards;
        for (const auto& o : plan.downstream) rewards.push_back(outcome_reward(p, o));
        auto adv = group_relative_advantages(rewards);
        if (adv.stddev < kSigmaFloor) ++degenerate_groups;
        ++group_count;
        TrajectoryGroup g;
        g.problem = &p;
        g.trajectories = plan.downstream;
        g.advantages = adv.normalized;
        for (const auto& t : g.trajectories)
          visited.insert(visited.end(), t.keys.begin(), t.keys.end());
        down_groups.push_back(std::move(g));

        TrajectoryGroup seg;
        seg.problem = &p;
        seg.trajectories.push_back(
            truncate_segment(plan.slot_segments[plan.selected], plan.realized_splits[plan.selected]));
        seg.advantages.push_back(0.0);  // filled after tracker updates
        visited.insert(visited.end(), seg.trajectories[0].keys.begin(),
                       seg.trajectories[0].keys.end());
        up_segments.push_back(std::move(seg));
        upstream_rewards_signed.push_back(upstream_reward(rewards));
        upstream_problem_ids.push_back(p.problem_id);

        double mean_len = 0.0;
        for (const auto& o : plan.downstream)
          mean_len += double(plan.selected_segment.size() + o.tokens.size());
        mean_total_lengths.push_back(mean_len / double(plan.downstream.size()));
      } else if (opts.mode == TrainMode::kGrpo) {
        GrpoRollout ro = run_grpo_rollout(p, policy, cfg.group_size, rollout_seed);
        step_ledger += ro.ledger;
        std::vector<double> rewards;
        for (const auto& o : ro.responses) rewards.push_back(outcome_reward(p, o));
        auto adv = group_relative_advantages(rewards);
        if (adv.stddev < kSigmaFloor) ++degenerate_groups;
        ++group_count;
        TrajectoryGroup g;
        g.problem = &p;
        g.trajectories = std::move(ro.responses);
        g.advantages = adv.normalized;
        for (const auto& t : g.trajectories)
          visited.insert(visited.end(), t.keys.begin(), t.keys.end());
        down_groups.push_back(std::move(g));
      } else {  // SPO: one full response per prompt, temporal baseline
        ConditioningContext ctx;
        ctx.mode = CondMode::kUnconditional;
        ctx.phase = Phase::kDownstream;
        Trajectory t = sample_trajectory(policy, p, ctx, derive_seed(rollout_seed, 5));
        step_ledger.generated_tokens += (long long)t.tokens.size();
        visited.insert(visited.end(), t.keys.begin(), t.keys.end());
        TrajectoryGroup seg;
        seg.problem = &p;
        seg.advantages.push_back(0.0);
        upstream_rewards_signed.push_back(outcome_reward(p, t));
        upstream_problem_ids.push_back(p.problem_id);
        seg.trajectories.push_back(std::move(t));
        up_segments.push_back(std::move(seg));
      }
    }
    if (opts.mode == TrainMode::kSpo) step_ledger.batch_dispatches = 1;

    auto visitation = sorted_unique_keys(visited);
    // Policy drift since the previous step's rollouts, over the contexts this
    // batch actually visited.
    double d_kl = step_idx == 0 ? 0.0 : kl_divergence(policy, prev_step_policy, visitation);

    // Tracker updates (pre-update baselines feed the advantages).
    if (!up_segments.empty()) {
      std::vector<double> raw;
      for (size_t i = 0; i < up_segments.size(); ++i) {
        double r = upstream_rewards_signed[i];
        raw.push_back(tracker.upstream_advantage(upstream_problem_ids[i], r));
        tracker.update(upstream_problem_ids[i], map_reward(r), d_kl);
      }
      auto norm = raw.size() >= 2 ? batch_normalize(raw) : AdvantageBatch{raw, raw, 0.0, 0.0};
      for (size_t i = 0; i < up_segments.size(); ++i)
        up_segments[i].advantages[0] = norm.normalized[i];
    }
    if (opts.mode == TrainMode::kSkpo) {
      for (size_t i = 0; i < upstream_problem_ids.size(); ++i)
        lengths.update(*down_groups[i].problem, mean_total_lengths[i], d_kl);
    }

    StepLog log_row;
    log_row.step = step_idx;
    log_row.mode = opts.mode;
    log_row.entropy = visitation.empty() ? 0.0 : entropy(policy, visitation);
    log_row.adv_zero_rate =
        group_count > 0 ? double(degenerate_groups) / double(group_count)
                        : 0.0;
    if (opts.mode == TrainMode::kSpo && !up_segments.empty()) {
      int zero = 0;
      for (const auto& s : up_segments)
        if (s.advantages[0] == 0.0) ++zero;
      log_row.adv_zero_rate = double(zero) / double(up_segments.size());
    }
    log_row.generated_tokens = step_ledger.generated_tokens;
    log_row.dispatches = step_ledger.batch_dispatches;

    // Objectives at pi_old, before any mini-batch update.
    if (!down_groups.empty())
      log_row.downstream_obj = downstream_objective_grad(policy, down_groups, cfg).first;
    if (!up_segments.empty())
      log_row.upstream_obj = upstream_objective_grad(policy, up_segments, cfg).first;

    // Optimization: pi_old is frozen in the trajectories' stored log-probs;
    // mini-batch passes update theta against it.
    prev_step_policy = policy;
    policy.bump_snapshot();
    // The combined weighting applies to SKPO; the single-objective baselines
    // use their sole objective at full weight.
    double w_down_eff = opts.mode == TrainMode::kSkpo ? cfg.w_down : 1.0;
    double w_up_eff = opts.mode == TrainMode::kSkpo ? cfg.w_up : 1.0;
    int mb = std::max(1, cfg.mini_batches);
    for (int m = 0; m < mb; ++m) {
      std::vector<TrajectoryGroup> down_mb, up_mb;
      for (size_t i = size_t(m); i < down_groups.size(); i += size_t(mb))
        down_mb.push_back(down_groups[i]);
      for (size_t i = size_t(m); i < up_segments.size(); i += size_t(mb))
        up_mb.push_back(up_segments[i]);
      GradientAccumulator total;
      if (!down_mb.empty() && w_down_eff != 0.0) {
        auto [obj, g] = downstream_objective_grad(policy, down_mb, cfg);
        (void)obj;
        total.add_scaled(g, w_down_eff);
      }
      if (!up_mb.empty() && w_up_eff != 0.0) {
        auto [obj, g] = upstream_objective_grad(policy, up_mb, cfg);
        (void)obj;
        total.add_scaled(g, w_up_eff);
      }
      total.apply(policy, cfg.learning_rate);
    }

    result.total_generated_tokens += step_ledger.generated_tokens;

    bool last_step =
        step_idx == opts.steps - 1 ||
        (opts.token_budget > 0 && result.total_generated_tokens >= opts.token_budget);
    bool eval_now = (cfg.eval_every > 0 && step_idx % cfg.eval_every == 0) || last_step;
    if (eval_now)
      log_row.mean_acc = evaluate_mean_accuracy(policy, dataset, cfg.eval_rollouts,
                                                derive_seed(opts.seed, 0x4d454ull, uint64_t(step_idx)));
    result.log.push_back(log_row);

    if (last_step) break;
  }
  return result;
}

}  // namespace skpo
