#include "skpo/credit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace skpo {

double outcome_reward(const ChainProblem& p, const Trajectory& traj) {
  if (!traj.terminal(p)) throw std::logic_error("outcome reward of non-terminal trajectory");
  return outcome_of_state(p, traj.final_state) == Outcome::kCorrect ? 1.0 : -1.0;
}

double upstream_reward(const std::vector<double>& downstream_rewards) {
  if (downstream_rewards.empty()) throw std::invalid_argument("empty downstream reward list");
  double sum = 0.0;
  for (double r : downstream_rewards) sum += r;
  return sum / double(downstream_rewards.size());
}

double map_reward(double r) {
  if (r < -1.0 || r > 1.0) throw std::invalid_argument("reward outside [-1, 1]");
  return (r + 1.0) / 2.0;
}

double unmap_reward(double v) {
  if (v < 0.0 || v > 1.0) throw std::invalid_argument("mapped reward outside [0, 1]");
  return 2.0 * v - 1.0;
}

namespace {

AdvantageBatch center_and_scale(const std::vector<double>& values) {
  AdvantageBatch b;
  b.raw = values;
  double n = double(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  b.mean = mean;
  b.stddev = std::sqrt(var);
  b.normalized.resize(values.size());
  if (b.stddev < kSigmaFloor) {
    std::fill(b.normalized.begin(), b.normalized.end(), 0.0);
  } else {
    for (size_t i = 0; i < values.size(); ++i)
      b.normalized[i] = (values[i] - mean) / b.stddev;
  }
  return b;
}

}  // namespace

AdvantageBatch group_relative_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("group size must be >= 2");
  return center_and_scale(rewards);
}

AdvantageBatch batch_normalize(const std::vector<double>& raw_advantages) {
  if (raw_advantages.size() < 2) throw std::invalid_argument("batch size must be >= 2");
  return center_and_scale(raw_advantages);
}

double forgetting_factor(double d_kl) {
  if (d_kl < 0.0) throw std::invalid_argument("negative KL");
  return std::clamp(std::exp2(-d_kl / kTauHalf), kRhoMin, kRhoMax);
}

double ema_update(EmaCell& cell, double observation, double d_kl, double default_value) {
  double pre = cell.seen ? cell.value : default_value;
  if (!cell.seen) {
    cell.value = default_value;
    cell.seen = true;
  }
  double rho = forgetting_factor(d_kl);
  double eta = 1.0 / (rho * cell.count + 1.0);
  cell.value += eta * (observation - cell.value);
  cell.count = rho * cell.count + 1.0;
  return pre;
}

double ValueTracker::update(uint32_t problem_id, double mapped_reward, double d_kl) {
  if (mapped_reward < 0.0 || mapped_reward > 1.0)
    throw std::invalid_argument("tracker reward outside [0, 1]");
  return ema_update(cells_[problem_id], mapped_reward, d_kl, default_);
}

double ValueTracker::baseline(uint32_t problem_id) const {
  auto it = cells_.find(problem_id);
  return (it == cells_.end() || !it->second.seen) ? default_ : it->second.value;
}

bool ValueTracker::seen(uint32_t problem_id) const {
  auto it = cells_.find(problem_id);
  return it != cells_.end() && it->second.seen;
}

double ValueTracker::count(uint32_t problem_id) const {
  auto it = cells_.find(problem_id);
  return it == cells_.end() ? 0.0 : it->second.count;
}

double ValueTracker::upstream_advantage(uint32_t problem_id, double reward_signed) const {
  return reward_signed - unmap_reward(baseline(problem_id));
}

void ValueTracker::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open tracker file for write: " + path);
  out << "skpo_tracker_v1\n";
  std::vector<uint32_t> ids;
  for (const auto& [id, cell] : cells_)
    if (cell.seen) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  out.precision(17);
  for (uint32_t id : ids) {
    const auto& c = cells_.at(id);
    out << id << ',' << c.value << ',' << c.count << '\n';
  }
}

ValueTracker ValueTracker::load(const std::string& path, double default_value) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tracker file: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "skpo_tracker_v1") throw std::runtime_error("bad tracker header: " + path);
  ValueTracker tracker(default_value);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    uint32_t id;
    char c1, c2;
    EmaCell cell;
    if (!(ss >> id >> c1 >> cell.value >> c2 >> cell.count) || c1 != ',' || c2 != ',')
      throw std::runtime_error("malformed tracker record: " + line);
    cell.seen = true;
    tracker.cells_[id] = cell;
  }
  return tracker;
}

std::vector<double> prioritized_prompt_weights(const ValueTracker& tracker,
                                               const std::vector<uint32_t>& problem_ids,
                                               double epsilon) {
  if (problem_ids.empty()) throw std::invalid_argument("empty prompt list");
  std::vector<double> w(problem_ids.size());
  double total = 0.0;
  for (size_t i = 0; i < problem_ids.size(); ++i) {
    double v = tracker.baseline(problem_ids[i]);
    w[i] = v * (1.0 - v) + epsilon;
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace skpo
