#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace skpo {

// Generation vocabulary: three increment tokens and an explicit terminator.
enum Token : uint8_t { kAdd1 = 0, kAdd2 = 1, kAdd3 = 2, kStop = 3 };
inline constexpr int kVocabSize = 4;

inline int token_increment(Token t) {
  switch (t) {
    case kAdd1: return 1;
    case kAdd2: return 2;
    case kAdd3: return 3;
    case kStop: return 0;
  }
  return 0;
}

// Context-window alphabet: the vocabulary plus two marker symbols that are
// never sampled. kSymProblem marks the position of the problem statement in
// the conditioning stream; kSymPad fills not-yet-written slots.
inline constexpr uint8_t kSymPad = 4;
inline constexpr uint8_t kSymProblem = 5;
inline constexpr int kSymCount = 6;

inline constexpr int kDefaultWindowSize = 3;

// Fixed-length sliding window over the conditioning stream, oldest first.
struct ContextWindow {
  std::vector<uint8_t> syms;

  static ContextWindow padded(int w) {
    ContextWindow cw;
    cw.syms.assign(size_t(w), kSymPad);
    return cw;
  }

  void push(uint8_t sym) {
    for (size_t i = 0; i + 1 < syms.size(); ++i) syms[i] = syms[i + 1];
    syms.back() = sym;
  }

  uint64_t code() const {
    uint64_t c = 0;
    for (uint8_t s : syms) c = c * kSymCount + s;
    return c;
  }

  bool operator==(const ContextWindow&) const = default;
};

struct ChainProblem {
  uint32_t problem_id = 0;
  int target = 1;   // integer sum the trajectory must reach
  int max_len = 4;  // token budget including the STOP token

  ChainProblem() = default;
  ChainProblem(uint32_t id, int target_, int max_len_);
};

struct EnvState {
  int accumulated = 0;
  int steps_used = 0;
  bool stopped = false;  // last emitted token was STOP
  ContextWindow window;

  bool terminal(const ChainProblem& p) const {
    return stopped || steps_used >= p.max_len;
  }
};

// Fresh state with an empty generation history; the window holds the
// problem marker preceded by padding.
EnvState initial_state(const ChainProblem& p, int window_size = kDefaultWindowSize);

EnvState step(const ChainProblem& p, const EnvState& s, Token t);

enum class Outcome { kCorrect, kIncorrect };

// Correct iff the sum hit the target and the trajectory ended with an
// explicit STOP; running out of budget is incorrect even at the target.
Outcome outcome_of_state(const ChainProblem& p, const EnvState& s);

// Line-delimited dataset records: problem_id,target,max_len
void save_problems(const std::string& path, const std::vector<ChainProblem>& ps);
std::vector<ChainProblem> load_problems(const std::string& path);

// Deterministic synthetic dataset with unique problem ids.
std::vector<ChainProblem> generate_problems(int count, int target_min, int target_max,
                                            int max_len_min, int max_len_max, uint64_t seed);

}  // namespace skpo
