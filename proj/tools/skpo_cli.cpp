// Command-line driver for the chain-environment credit-assignment study.
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skpo/analysis.hpp"
#include "skpo/csv.hpp"
#include "skpo/env.hpp"
#include "skpo/mc_lab.hpp"
#include "skpo/optimize.hpp"
#include "skpo/rollout.hpp"
#include "skpo/run_config.hpp"

namespace fs = std::filesystem;
using namespace skpo;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string mode;
  int64_t seed = -1;
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file");
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--out", f.out_dir, "output directory (default from config)");
  cmd->add_option("--workers", f.workers, "worker thread count");
  cmd->add_option("--mode", f.mode, "training mode: skpo | grpo | spo");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = load_run_config(f.config_path);
  if (f.seed >= 0) cfg.seed = uint64_t(f.seed);
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (f.workers > 0) cfg.workers = f.workers;
  if (!f.mode.empty()) cfg.mode = f.mode;
  validate_run_config(cfg);
  fs::create_directories(cfg.out_dir);
  return cfg;
}

std::vector<ChainProblem> make_dataset(const RunConfig& cfg) {
  return generate_problems(cfg.problem_count, cfg.target_min, cfg.target_max, cfg.max_len_min,
                           cfg.max_len_max, derive_seed(cfg.seed, 0x0da7a));
}

const char* strategy_name(CondMode m) {
  switch (m) {
    case CondMode::kUnconditional: return "unconditional";
    case CondMode::kContinual: return "continual";
    case CondMode::kSkip: return "skip";
  }
  return "?";
}

int cmd_sign_accuracy(const CommonFlags& f) {
  RunConfig cfg = resolve_config(f);
  CsvWriter csv(cfg.out_dir + "/sign_accuracy.csv", "sign_accuracy_v1",
                {"samples", "group_size", "center", "spread", "trials", "accuracy"});
  int grid_idx = 0;
  for (int n : {8, 32, 128, 512}) {
    for (double spread : {0.05, 0.15, 0.30, 0.45}) {
      SignExperimentConfig sc;
      sc.group_size = cfg.group_size;
      sc.samples = n;
      sc.center = cfg.sign_center;
      sc.spread = spread;
      sc.trials = cfg.sign_trials;
      sc.workers = cfg.workers;
      double acc = sign_accuracy_experiment(sc, derive_seed(cfg.seed, 0x51, uint64_t(grid_idx)));
      ++grid_idx;
      csv.cell(n).cell(sc.group_size).cell(sc.center).cell(sc.spread);
      csv.cell((long long)sc.trials).cell(acc).end_row();
      std::cout << "N=" << n << " spread=" << spread << " sign accuracy " << acc << "\n";
    }
  }
  return 0;
}

int cmd_k_sweep(const CommonFlags& f) {
  RunConfig cfg = resolve_config(f);
  auto problems = make_dataset(cfg);
  PolicyParams policy;  // uniform
  KSweepConfig kc;
  kc.group_size = cfg.group_size;
  kc.trials_per_group = cfg.sweep_trials_per_group;
  kc.workers = cfg.workers;
  auto rows = k_sweep(problems, policy, kc, derive_seed(cfg.seed, 0x52));
  CsvWriter csv(cfg.out_dir + "/k_sweep.csv", "k_sweep_v1",
                {"k", "sign_accuracy", "mae", "variance", "cells"});
  for (const auto& r : rows) {
    csv.cell(r.k).cell(r.sign_accuracy).cell(r.mae).cell(r.variance).cell(r.cells).end_row();
    std::cout << (r.k ? "K=" + std::to_string(r.k) : std::string("GRPO"))
              << " sign accuracy " << r.sign_accuracy << " mae " << r.mae << "\n";
  }
  return 0;
}

TrainResult run_training(const RunConfig& cfg, TrainMode mode,
                         const std::vector<ChainProblem>& problems) {
  StepConfig sc;
  sc.group_size = cfg.group_size;
  sc.prompts_per_step = cfg.prompts_per_step;
  sc.learning_rate = cfg.learning_rate;
  TrainOptions opts;
  opts.mode = mode;
  opts.steps = cfg.train_steps;
  opts.seed = derive_seed(cfg.seed, 0x53);
  opts.token_budget = cfg.token_budget;
  return train(problems, sc, opts);
}

void write_train_csv(const std::string& path, const TrainResult& result) {
  CsvWriter csv(path, "train_v1",
                {"step", "mode", "mean_acc_32", "entropy", "upstream_obj", "downstream_obj",
                 "adv_zero_rate", "generated_tokens", "dispatches"});
  for (const auto& s : result.log) {
    csv.cell(s.step).cell(train_mode_name(s.mode)).cell(s.mean_acc).cell(s.entropy);
    csv.cell(s.upstream_obj).cell(s.downstream_obj).cell(s.adv_zero_rate);
    csv.cell(s.generated_tokens).cell(s.dispatches).end_row();
  }
}

int cmd_train(const CommonFlags& f) {
  RunConfig cfg = resolve_config(f);
  auto problems = make_dataset(cfg);
  TrainMode mode = parse_train_mode(cfg.mode);
  TrainResult result = run_training(cfg, mode, problems);
  write_train_csv(cfg.out_dir + "/train_" + cfg.mode + ".csv", result);
  save_policy(cfg.out_dir + "/policy_" + cfg.mode + ".txt", result.policy);
  double final_acc = result.log.empty() ? 0.0 : result.log.back().mean_acc;
  std::cout << cfg.mode << ": " << result.log.size() << " steps, final mean accuracy "
            << final_acc << ", " << result.total_generated_tokens << " generated tokens\n";
  return 0;
}

int cmd_shortcut(const CommonFlags& f) {
  RunConfig cfg = resolve_config(f);
  auto problems = make_dataset(cfg);
  PolicyParams policy;  // uniform
  ShortcutConfig sc;
  sc.group_size = cfg.group_size;
  ShortcutReport report = shortcut_eval(policy, problems, sc, derive_seed(cfg.seed, 0x54));
  CsvWriter csv(cfg.out_dir + "/shortcut.csv", "shortcut_v1",
                {"strategy", "split", "diversity", "zero_rate", "length", "problems"});
  for (const auto& c : report.cells) {
    csv.cell(strategy_name(c.strategy)).cell(c.split_fraction).cell(c.diversity);
    csv.cell(c.advantage_zero_rate).cell(c.mean_response_length).cell(c.problems).end_row();
  }
  std::cout << "shortcut study: " << report.cells.size() << " cells written\n";
  return 0;
}

int cmd_profile(const CommonFlags& f) {
  RunConfig cfg = resolve_config(f);
  auto problems = make_dataset(cfg);
  TrainResult skpo_run = run_training(cfg, TrainMode::kSkpo, problems);
  TrainResult grpo_run = run_training(cfg, TrainMode::kGrpo, problems);
  std::vector<MethodPolicy> methods = {{"skpo", &skpo_run.policy}, {"grpo", &grpo_run.policy}};
  AdvantageProfileConfig pc;
  pc.rollouts_per_problem = cfg.profile_rollouts;
  auto rows = advantage_profile(methods, problems, pc, derive_seed(cfg.seed, 0x55));
  CsvWriter csv(cfg.out_dir + "/profile.csv", "profile_v1",
                {"method", "bin", "mean_advantage", "n"});
  for (const auto& r : rows)
    csv.cell(r.method).cell(r.bin).cell(r.mean_advantage).cell(r.cells).end_row();
  std::cout << "advantage profile: " << rows.size() << " rows written\n";
  return 0;
}

int cmd_cost_audit(const CommonFlags& f) {
  RunConfig cfg = resolve_config(f);
  auto problems = make_dataset(cfg);
  PolicyParams policy;  // uniform
  LengthTracker lengths;
  CsvWriter csv(cfg.out_dir + "/cost_audit.csv", "cost_audit_v1",
                {"step", "generated_tokens", "recomputed_prefix_tokens", "batch_dispatches",
                 "mode"});
  struct Variant {
    const char* name;
    DispatchMode dispatch;
    bool grpo;
  };
  const Variant variants[] = {{"skpo_single_pass", DispatchMode::kSinglePass, false},
                              {"skpo_two_batch", DispatchMode::kTwoBatch, false},
                              {"grpo", DispatchMode::kSinglePass, true}};
  for (int s = 0; s < cfg.train_steps; ++s) {
    for (const auto& v : variants) {
      CostLedger ledger;
      for (const auto& p : problems) {
        uint64_t seed = derive_seed(cfg.seed, 0x56, uint64_t(s), p.problem_id);
        if (v.grpo)
          ledger += run_grpo_rollout(p, policy, cfg.group_size, seed).ledger;
        else
          ledger += run_single_pass(p, policy, cfg.group_size, lengths, seed, v.dispatch).ledger;
      }
      csv.cell(s).cell(ledger.generated_tokens).cell(ledger.recomputed_prefix_tokens);
      csv.cell(ledger.batch_dispatches).cell(v.name).end_row();
    }
  }
  std::cout << "cost audit: " << cfg.train_steps << " steps x 3 variants written\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chain-environment credit assignment experiments"};
  app.require_subcommand(1);

  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const CommonFlags&);
  };
  const Cmd cmds[] = {
      {"sign-accuracy", "Group-advantage sign accuracy vs continuation budget N", cmd_sign_accuracy},
      {"k-sweep", "Token-reward estimate quality vs continuation budget K", cmd_k_sweep},
      {"train", "Tabular policy optimization on the chain environment", cmd_train},
      {"shortcut", "Conditioning-strategy comparison (shortcut validation)", cmd_shortcut},
      {"profile", "Inter-method positional advantage profile", cmd_profile},
      {"cost-audit", "Rollout token/dispatch accounting", cmd_cost_audit},
  };

  std::vector<CommonFlags> flags(std::size(cmds));
  std::vector<const Cmd*> chosen;
  for (size_t i = 0; i < std::size(cmds); ++i) {
    CLI::App* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    add_common(sub, flags[i]);
    sub->callback([&, i] { chosen.push_back(&cmds[i]); });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    for (const Cmd* c : chosen) {
      int rc = c->run(flags[c - cmds]);
      if (rc != 0) return rc;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
