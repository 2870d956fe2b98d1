#include "skpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace skpo {

PolicyParams::Row PolicyParams::softmax(const Row& logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  Row p{};
  double z = 0.0;
  for (int i = 0; i < kVocabSize; ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

double PolicyParams::log_prob(ContextKey key, Token t) const {
  Row l = logits(key);
  double m = *std::max_element(l.begin(), l.end());
  double z = 0.0;
  for (double v : l) z += std::exp(v - m);
  return l[t] - m - std::log(z);
}

EnvState conditioning_start_state(const ChainProblem& p, const ConditioningContext& ctx) {
  switch (ctx.mode) {
    case CondMode::kUnconditional:
      return initial_state(p, ctx.window_size);
    case CondMode::kSkip: {
      EnvState s;
      s.window = ContextWindow::padded(ctx.window_size);
      for (Token t : ctx.segment) s.window.push(uint8_t(t));
      s.window.push(kSymProblem);
      return s;
    }
    case CondMode::kContinual: {
      EnvState s = initial_state(p, ctx.window_size);
      for (Token t : ctx.segment) s = step(p, s, t);
      if (s.terminal(p)) throw std::logic_error("continual segment is already terminal");
      return s;
    }
  }
  throw std::logic_error("bad conditioning mode");
}

std::vector<uint8_t> conditioning_prefix_syms(const ConditioningContext& ctx) {
  std::vector<uint8_t> syms;
  if (ctx.mode == CondMode::kSkip)
    for (Token t : ctx.segment) syms.push_back(uint8_t(t));
  if (ctx.mode == CondMode::kContinual) {
    syms.push_back(kSymProblem);
    for (Token t : ctx.segment) syms.push_back(uint8_t(t));
    return syms;
  }
  syms.push_back(kSymProblem);
  return syms;
}

Trajectory sample_trajectory(const PolicyParams& policy, const ChainProblem& p,
                             const ConditioningContext& ctx, uint64_t seed, int max_tokens) {
  Trajectory traj;
  traj.problem_id = p.problem_id;
  traj.phase = ctx.phase;
  traj.mode = ctx.mode;
  traj.prefix_syms = conditioning_prefix_syms(ctx);
  traj.init_state = conditioning_start_state(p, ctx);

  Rng rng(seed);
  EnvState s = traj.init_state;
  while (!s.terminal(p)) {
    if (max_tokens >= 0 && int(traj.tokens.size()) >= max_tokens) break;
    ContextKey key = make_key(p.problem_id, s.window);
    auto probs = policy.probs(key);
    Token t = Token(rng.next_categorical(probs));
    traj.tokens.push_back(t);
    traj.log_probs.push_back(std::log(probs[t]));
    traj.keys.push_back(key);
    s = step(p, s, t);
  }
  traj.final_state = s;
  return traj;
}

Outcome sample_completion_outcome(const PolicyParams& policy, const ChainProblem& p,
                                  const EnvState& from, Rng& rng) {
  EnvState s = from;
  while (!s.terminal(p)) {
    ContextKey key = make_key(p.problem_id, s.window);
    auto probs = policy.probs(key);
    s = step(p, s, Token(rng.next_categorical(probs)));
  }
  return outcome_of_state(p, s);
}

std::vector<double> log_prob(const PolicyParams& policy, const ChainProblem& p,
                             const Trajectory& traj) {
  std::vector<double> lps;
  lps.reserve(traj.tokens.size());
  EnvState s = traj.init_state;
  for (Token t : traj.tokens) {
    if (int(t) < 0 || int(t) >= kVocabSize) throw std::invalid_argument("token outside vocab");
    lps.push_back(policy.log_prob(make_key(p.problem_id, s.window), t));
    s = step(p, s, t);
  }
  return lps;
}

PolicyParams::Row grad_log_prob(const PolicyParams& policy, ContextKey key, Token t) {
  auto probs = policy.probs(key);
  PolicyParams::Row g;
  for (int i = 0; i < kVocabSize; ++i) g[i] = (i == int(t) ? 1.0 : 0.0) - probs[i];
  return g;
}

double kl_divergence(const PolicyParams& p, const PolicyParams& q,
                     std::span<const ContextKey> visitation) {
  if (visitation.empty()) throw std::invalid_argument("empty visitation sample");
  double total = 0.0;
  for (ContextKey key : visitation) {
    auto pp = p.probs(key);
    auto qq = q.probs(key);
    double kl = 0.0;
    for (int i = 0; i < kVocabSize; ++i)
      if (pp[i] > 0.0) kl += pp[i] * (std::log(pp[i]) - std::log(qq[i]));
    total += kl;
  }
  return total / double(visitation.size());
}

double entropy(const PolicyParams& policy, std::span<const ContextKey> visitation) {
  if (visitation.empty()) throw std::invalid_argument("empty visitation sample");
  double total = 0.0;
  for (ContextKey key : visitation) {
    auto probs = policy.probs(key);
    double h = 0.0;
    for (double v : probs)
      if (v > 0.0) h -= v * std::log(v);
    total += h;
  }
  return total / double(visitation.size());
}

void save_policy(const std::string& path, const PolicyParams& policy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open policy checkpoint for write: " + path);
  out << "skpo_policy_v1 " << policy.snapshot_id() << "\n";
  std::vector<ContextKey> keys;
  keys.reserve(policy.row_count());
  for (const auto& [k, _] : policy.table()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  out.precision(17);
  for (ContextKey k : keys) {
    auto row = policy.logits(k);
    out << k;
    for (double v : row) out << ' ' << v;
    out << '\n';
  }
}

PolicyParams load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy checkpoint: " + path);
  std::string magic;
  uint64_t snapshot_id;
  if (!(in >> magic >> snapshot_id) || magic != "skpo_policy_v1")
    throw std::runtime_error("bad policy checkpoint header: " + path);
  PolicyParams policy;
  policy.set_snapshot_id(snapshot_id);
  ContextKey key;
  while (in >> key) {
    auto& row = policy.mutable_row(key);
    for (double& v : row)
      if (!(in >> v)) throw std::runtime_error("truncated policy checkpoint: " + path);
  }
  return policy;
}

EnvState state_at(const ChainProblem& p, const Trajectory& traj, size_t n) {
  if (n > traj.tokens.size()) throw std::out_of_range("position past trajectory end");
  EnvState s = traj.init_state;
  for (size_t i = 0; i < n; ++i) s = step(p, s, traj.tokens[i]);
  return s;
}

}  // namespace skpo
