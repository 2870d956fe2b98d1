#include "skpo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "skpo/credit.hpp"
#include "skpo/optimize.hpp"
#include "skpo/oracle.hpp"
#include "skpo/rng.hpp"

namespace skpo {

std::vector<double> default_split_grid() {
  return {1.0 / 6.0, 1.0 / 5.0, 1.0 / 4.0, 1.0 / 3.0, 2.0 / 5.0, 1.0 / 2.0};
}

const ShortcutCell& ShortcutReport::cell(CondMode strategy, size_t split_index) const {
  size_t splits = cells.size() / 3;
  size_t idx = size_t(strategy) * splits + split_index;
  if (idx >= cells.size()) throw std::out_of_range("shortcut cell");
  return cells[idx];
}

namespace {

constexpr CondMode kStrategies[] = {CondMode::kUnconditional, CondMode::kContinual,
                                    CondMode::kSkip};

// Returns false if the segment cannot be replayed to a non-terminal state.
bool segment_replayable(const ChainProblem& p, const std::vector<Token>& segment) {
  EnvState s = initial_state(p);
  for (Token t : segment) {
    if (s.terminal(p)) return false;
    s = step(p, s, t);
  }
  return !s.terminal(p);
}

}  // namespace

ShortcutReport shortcut_eval(const PolicyParams& policy, const std::vector<ChainProblem>& problems,
                             const ShortcutConfig& cfg, uint64_t seed) {
  if (cfg.group_size < 2) throw std::invalid_argument("group size must be >= 2");
  size_t splits = cfg.split_grid.size();
  ShortcutReport report;
  report.cells.resize(3 * splits);
  for (size_t si = 0; si < 3; ++si)
    for (size_t j = 0; j < splits; ++j) {
      auto& c = report.cells[si * splits + j];
      c.strategy = kStrategies[si];
      c.split_fraction = cfg.split_grid[j];
    }

  for (const ChainProblem& p : problems) {
    ConditioningContext ref_ctx;  // defaults: unconditional, downstream
    Trajectory ref = sample_trajectory(policy, p, ref_ctx, derive_seed(seed, 1, p.problem_id));
    size_t len = ref.length();
    if (len < 2) continue;  // nothing to cut

    for (size_t j = 0; j < splits; ++j) {
      size_t cut = size_t(std::llround(cfg.split_grid[j] * double(len)));
      cut = std::clamp<size_t>(cut, 1, len - 1);
      std::vector<Token> segment(ref.tokens.begin(), ref.tokens.begin() + ptrdiff_t(cut));
      // Keep the comparison paired: if any strategy cannot use this cell,
      // no strategy records it.
      if (!segment_replayable(p, segment)) continue;

      for (size_t si = 0; si < 3; ++si) {
        ConditioningContext ctx;
        ctx.mode = kStrategies[si];
        if (ctx.mode != CondMode::kUnconditional) ctx.segment = segment;
        uint64_t base = derive_seed(derive_seed(seed, 2, p.problem_id), si, j);

        std::set<int> sums;
        std::vector<Outcome> outcomes;
        double total_len = 0.0;
        for (int g = 0; g < cfg.group_size; ++g) {
          Trajectory t = sample_trajectory(policy, p, ctx, derive_seed(base, uint64_t(g)));
          sums.insert(t.final_state.accumulated);
          outcomes.push_back(outcome_of_state(p, t.final_state));
          total_len += double(t.length());
        }
        bool all_same = std::all_of(outcomes.begin(), outcomes.end(),
                                    [&](Outcome o) { return o == outcomes.front(); });

        auto& c = report.cells[si * splits + j];
        c.per_problem_diversity.push_back(double(sums.size()));
        c.per_problem_zero.push_back(all_same ? 1.0 : 0.0);
        c.per_problem_length.push_back(total_len / double(cfg.group_size));
        ++c.problems;
      }
    }
  }

  for (auto& c : report.cells) {
    auto mean = [](const std::vector<double>& v) {
      if (v.empty()) return 0.0;
      double s = 0.0;
      for (double x : v) s += x;
      return s / double(v.size());
    };
    c.diversity = mean(c.per_problem_diversity);
    c.advantage_zero_rate = mean(c.per_problem_zero);
    c.mean_response_length = mean(c.per_problem_length);
  }
  return report;
}

std::vector<ProfileBinRow> advantage_profile(const std::vector<MethodPolicy>& methods,
                                             const std::vector<ChainProblem>& problems,
                                             const AdvantageProfileConfig& cfg, uint64_t seed) {
  if (methods.size() < 2) throw std::invalid_argument("need at least two methods");
  for (const auto& m : methods)
    if (m.policy == nullptr) throw std::invalid_argument("null method policy");

  size_t eval_idx;
  if (cfg.eval_policy_index >= 0) {
    eval_idx = size_t(cfg.eval_policy_index);
    if (eval_idx >= methods.size()) throw std::out_of_range("eval policy index");
  } else {
    eval_idx = 0;
    double best = -1.0;
    for (size_t i = 0; i < methods.size(); ++i) {
      double acc = evaluate_mean_accuracy(*methods[i].policy, problems, 32,
                                          derive_seed(seed, 3, uint64_t(i)));
      if (acc > best) {
        best = acc;
        eval_idx = i;
      }
    }
  }
  const PolicyParams& eval_policy = *methods[eval_idx].policy;

  // reward_sum[m][bin], reward_n[m][bin] accumulated per problem, then the
  // per-bin inter-method comparison is formed and reset problem by problem.
  size_t nm = methods.size();
  std::vector<std::vector<double>> adv_sum(nm, std::vector<double>(kPositionBins, 0.0));
  std::vector<std::vector<long long>> adv_n(nm, std::vector<long long>(kPositionBins, 0));

  for (const ChainProblem& p : problems) {
    SuccessOracle oracle(p, eval_policy);
    std::vector<std::vector<double>> bin_sum(nm, std::vector<double>(kPositionBins, 0.0));
    std::vector<std::vector<long long>> bin_n(nm, std::vector<long long>(kPositionBins, 0));

    for (size_t mi = 0; mi < nm; ++mi) {
      uint64_t base = derive_seed(derive_seed(seed, 4, p.problem_id), mi);
      ConditioningContext ctx;  // unconditional
      for (int r = 0; r < cfg.rollouts_per_problem; ++r) {
        Trajectory t = sample_trajectory(*methods[mi].policy, p, ctx,
                                         derive_seed(base, uint64_t(r)));
        if (outcome_of_state(p, t.final_state) != Outcome::kCorrect) continue;
        size_t len = t.length();
        EnvState s = initial_state(p);
        for (size_t pos = 0; pos < len; ++pos) {
          s = step(p, s, t.tokens[pos]);
          int bin = int(pos * size_t(kPositionBins) / len);
          double reward = 2.0 * oracle.prob(s) - 1.0;
          bin_sum[mi][bin] += reward;
          ++bin_n[mi][bin];
        }
      }
    }

    for (int b = 0; b < kPositionBins; ++b) {
      bool complete = true;
      for (size_t mi = 0; mi < nm; ++mi)
        if (bin_n[mi][b] == 0) complete = false;
      if (!complete) continue;  // cell missing a method: dropped
      double mean = 0.0;
      std::vector<double> rewards(nm);
      for (size_t mi = 0; mi < nm; ++mi) {
        rewards[mi] = bin_sum[mi][b] / double(bin_n[mi][b]);
        mean += rewards[mi];
      }
      mean /= double(nm);
      for (size_t mi = 0; mi < nm; ++mi) {
        adv_sum[mi][b] += rewards[mi] - mean;
        ++adv_n[mi][b];
      }
    }
  }

  std::vector<ProfileBinRow> rows;
  for (size_t mi = 0; mi < nm; ++mi)
    for (int b = 0; b < kPositionBins; ++b) {
      ProfileBinRow row;
      row.method = methods[mi].name;
      row.bin = b;
      row.cells = adv_n[mi][b];
      row.mean_advantage = adv_n[mi][b] ? adv_sum[mi][b] / double(adv_n[mi][b]) : 0.0;
      rows.push_back(std::move(row));
    }
  return rows;
}

}  // namespace skpo
