#include "sapo/grouping.hpp"

#include <cmath>

#include "sapo/errors.hpp"

namespace sapo {

std::vector<double> normalize_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw InputError("normalize_advantages: group size must be at least 2");
  if (!(std_floor > 0.0)) throw InputError("normalize_advantages: std_floor must be positive");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double sd = std::sqrt(var);
  std::vector<double> out(rewards.size(), 0.0);
  if (!(sd >= std_floor)) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

TokenRatios compute_ratios(const PolicyParams& current, const Trajectory& trajectory) {
  if (trajectory.behavior_logprobs.size() != trajectory.response.size()) {
    throw InternalError("compute_ratios: behavior_logprobs length " +
                        std::to_string(trajectory.behavior_logprobs.size()) +
                        " does not match response length " +
                        std::to_string(trajectory.response.size()));
  }
  const auto current_logp = sequence_log_probs(current, trajectory.query, trajectory.response);
  TokenRatios out;
  out.log_ratios.resize(current_logp.size());
  out.ratios.resize(current_logp.size());
  for (std::size_t t = 0; t < current_logp.size(); ++t) {
    out.log_ratios[t] = current_logp[t] - trajectory.behavior_logprobs[t];
    out.ratios[t] = std::exp(out.log_ratios[t]);
  }
  return out;
}

GroupBatch build_group(const PolicyParams& params_old, const TokenSeq& query, int group_size,
                       const RewardFn& reward_fn, int max_len, Rng& rng, double std_floor) {
  if (group_size < 2) throw InputError("build_group: group size must be at least 2");
  GroupBatch group;
  group.query = query;
  group.trajectories.reserve(group_size);
  std::vector<double> rewards;
  rewards.reserve(group_size);
  for (int i = 0; i < group_size; ++i) {
    Trajectory traj = sample_sequence(params_old, query, max_len, rng);
    traj.reward = reward_fn(traj.query, traj.response);
    rewards.push_back(traj.reward);
    group.trajectories.push_back(std::move(traj));
  }
  group.advantages = normalize_advantages(rewards, std_floor);
  for (int i = 0; i < group_size; ++i) group.trajectories[i].advantage = group.advantages[i];
  return group;
}

}  // namespace sapo
