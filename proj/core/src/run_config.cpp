#include "skpo/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace skpo {

namespace {

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  return out;
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> m = [] {
    std::map<std::string, Field> f;
    auto num = [&f](const std::string& key, auto RunConfig::* member) {
      using T = std::decay_t<decltype(std::declval<RunConfig>().*member)>;
      f[key] = Field{
          [member](const RunConfig& c) {
            if constexpr (std::is_same_v<T, double>)
              return fmt_f64(c.*member);
            else
              return std::to_string(c.*member);
          },
          [member, key](RunConfig& c, const std::string& v) {
            c.*member = parse_num<T>(v, key);
          }};
    };
    num("problem_count", &RunConfig::problem_count);
    num("target_min", &RunConfig::target_min);
    num("target_max", &RunConfig::target_max);
    num("max_len_min", &RunConfig::max_len_min);
    num("max_len_max", &RunConfig::max_len_max);
    num("seed", &RunConfig::seed);
    num("workers", &RunConfig::workers);
    num("group_size", &RunConfig::group_size);
    num("sign_trials", &RunConfig::sign_trials);
    num("sign_samples", &RunConfig::sign_samples);
    num("sign_center", &RunConfig::sign_center);
    num("sign_spread", &RunConfig::sign_spread);
    num("sweep_trials_per_group", &RunConfig::sweep_trials_per_group);
    num("train_steps", &RunConfig::train_steps);
    num("prompts_per_step", &RunConfig::prompts_per_step);
    num("learning_rate", &RunConfig::learning_rate);
    num("token_budget", &RunConfig::token_budget);
    num("profile_rollouts", &RunConfig::profile_rollouts);
    f["out_dir"] = Field{[](const RunConfig& c) { return c.out_dir; },
                         [](RunConfig& c, const std::string& v) { c.out_dir = v; }};
    f["mode"] = Field{[](const RunConfig& c) { return c.mode; },
                      [](RunConfig& c, const std::string& v) { c.mode = v; }};
    return f;
  }();
  return m;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end())
      throw std::invalid_argument("unknown config key '" + key + "'");
    it->second.set(cfg, value);
  }
  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, field] : fields()) out << key << "=" << field.get(cfg) << "\n";
  return out.str();
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << serialize_run_config(cfg);
}

void validate_run_config(const RunConfig& cfg) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(cfg.problem_count >= 1, "problem_count must be >= 1");
  require(cfg.target_min >= 1 && cfg.target_max <= 64 && cfg.target_min <= cfg.target_max,
          "target range must lie within [1, 64]");
  require(cfg.max_len_min >= 4 && cfg.max_len_max <= 16 && cfg.max_len_min <= cfg.max_len_max,
          "max_len range must lie within [4, 16]");
  require(cfg.workers >= 1, "workers must be >= 1");
  require(cfg.group_size >= 2, "group_size must be >= 2");
  require(cfg.sign_trials >= 1, "sign_trials must be >= 1");
  require(cfg.sign_samples >= 1, "sign_samples must be >= 1");
  require(cfg.sign_center >= 0.0 && cfg.sign_center <= 1.0, "sign_center must be in [0, 1]");
  require(cfg.sign_spread >= 0.0, "sign_spread must be >= 0");
  require(cfg.sweep_trials_per_group >= 1, "sweep_trials_per_group must be >= 1");
  require(cfg.train_steps >= 1, "train_steps must be >= 1");
  require(cfg.prompts_per_step >= 1, "prompts_per_step must be >= 1");
  require(cfg.learning_rate > 0.0, "learning_rate must be > 0");
  require(cfg.token_budget >= 0, "token_budget must be >= 0");
  require(cfg.profile_rollouts >= 1, "profile_rollouts must be >= 1");
  require(cfg.mode == "skpo" || cfg.mode == "grpo" || cfg.mode == "spo",
          "mode must be one of skpo, grpo, spo");
}

}  // namespace skpo
