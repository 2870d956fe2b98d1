#pragma once
#include <cstdint>
#include <string>

namespace skpo {

// Flat experiment configuration shared by the command-line drivers. Loaded
// from key=value files ('#' comments allowed); unknown keys are an error.
// Serialization writes every key in sorted order, so load(save(c)) == c.
struct RunConfig {
  // Dataset.
  int problem_count = 64;
  int target_min = 2;
  int target_max = 12;
  int max_len_min = 4;
  int max_len_max = 10;

  // Shared.
  uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "out";
  std::string mode = "skpo";  // skpo | grpo | spo
  int group_size = 8;

  // Sign-accuracy study.
  long long sign_trials = 100000;
  int sign_samples = 8;
  double sign_center = 0.5;
  double sign_spread = 0.05;

  // Continuation-budget sweep.
  int sweep_trials_per_group = 8;

  // Training.
  int train_steps = 100;
  int prompts_per_step = 128;
  double learning_rate = 0.05;
  long long token_budget = 0;  // 0: uncapped

  // Analysis.
  int profile_rollouts = 8;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

// Parse / serialize via an in-memory text form (used by file IO and tests).
RunConfig parse_run_config(const std::string& text);
std::string serialize_run_config(const RunConfig& cfg);

// Validity checks shared by all drivers; throws std::invalid_argument.
void validate_run_config(const RunConfig& cfg);

}  // namespace skpo
