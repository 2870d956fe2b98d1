#include "skpo/env.hpp"

#include <fstream>
#include <sstream>

#include "skpo/rng.hpp"

namespace skpo {

ChainProblem::ChainProblem(uint32_t id, int target_, int max_len_)
    : problem_id(id), target(target_), max_len(max_len_) {
  if (target < 1 || target > 64) throw std::invalid_argument("target out of range [1, 64]");
  if (max_len < 4 || max_len > 16) throw std::invalid_argument("max_len out of range [4, 16]");
  // Must be solvable: target within max_len-1 ADD tokens, leaving room for STOP.
  if (target > 3 * (max_len - 1))
    throw std::invalid_argument("target unreachable within max_len - 1 ADD tokens");
}

EnvState initial_state(const ChainProblem&, int window_size) {
  EnvState s;
  s.window = ContextWindow::padded(window_size);
  s.window.push(kSymProblem);
  return s;
}

EnvState step(const ChainProblem& p, const EnvState& s, Token t) {
  if (s.terminal(p)) throw std::logic_error("step() on terminal state");
  EnvState n = s;
  n.accumulated += token_increment(t);
  n.steps_used += 1;
  n.stopped = (t == kStop);
  n.window.push(uint8_t(t));
  return n;
}

Outcome outcome_of_state(const ChainProblem& p, const EnvState& s) {
  if (!s.terminal(p)) throw std::logic_error("outcome of non-terminal trajectory");
  return (s.stopped && s.accumulated == p.target) ? Outcome::kCorrect : Outcome::kIncorrect;
}

void save_problems(const std::string& path, const std::vector<ChainProblem>& ps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dataset file for write: " + path);
  for (const auto& p : ps)
    out << p.problem_id << ',' << p.target << ',' << p.max_len << '\n';
}

std::vector<ChainProblem> load_problems(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<ChainProblem> ps;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    uint32_t id;
    int target, max_len;
    char c1, c2;
    if (!(ss >> id >> c1 >> target >> c2 >> max_len) || c1 != ',' || c2 != ',')
      throw std::runtime_error("malformed dataset record: " + line);
    ps.emplace_back(id, target, max_len);
  }
  return ps;
}

std::vector<ChainProblem> generate_problems(int count, int target_min, int target_max,
                                            int max_len_min, int max_len_max, uint64_t seed) {
  Rng rng(derive_seed(seed, /*label=*/0x646174617365ull));  // "datase"
  std::vector<ChainProblem> ps;
  ps.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    for (;;) {
      int max_len = max_len_min + int(rng.next_below(uint64_t(max_len_max - max_len_min + 1)));
      int target = target_min + int(rng.next_below(uint64_t(target_max - target_min + 1)));
      if (target <= 3 * (max_len - 1)) {
        ps.emplace_back(uint32_t(i), target, max_len);
        break;
      }
    }
  }
  return ps;
}

}  // namespace skpo
