#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sapo/policy.hpp"
#include "sapo/random.hpp"

namespace sapo {

inline constexpr double kDefaultStdFloor = 1e-8;

/// G responses to one query. advantages[i] mirrors trajectories[i].advantage.
struct GroupBatch {
  TokenSeq query;
  std::vector<Trajectory> trajectories;
  std::vector<double> advantages;

  std::size_t group_size() const { return trajectories.size(); }
};

struct TokenRatios {
  std::vector<double> ratios;      // r_t = pi(y_t) / pi_old(y_t)
  std::vector<double> log_ratios;  // z_t = log r_t
};

using RewardFn = std::function<double(const TokenSeq& query, const TokenSeq& response)>;

/// (R - mean) / std with the population std. Groups whose std falls below
/// std_floor carry no signal and get all-zero advantages.
std::vector<double> normalize_advantages(std::span<const double> rewards,
                                         double std_floor = kDefaultStdFloor);

TokenRatios compute_ratios(const PolicyParams& current, const Trajectory& trajectory);

/// Samples G responses from params_old, scores them and fills in advantages.
GroupBatch build_group(const PolicyParams& params_old, const TokenSeq& query, int group_size,
                       const RewardFn& reward_fn, int max_len, Rng& rng,
                       double std_floor = kDefaultStdFloor);

}  // namespace sapo
