#pragma once

#include <span>
#include <vector>

#include "sapo/gates.hpp"
#include "sapo/grouping.hpp"
#include "sapo/policy.hpp"

namespace sapo {

/// A sequence and its weight in the batch estimate of the surrogate.
/// The advantage is read from trajectory->advantage.
struct WeightedSequence {
  const Trajectory* trajectory;
  double weight;
};

using SequenceBatch = std::vector<WeightedSequence>;

/// Groups weighted equally, sequences equally within a group:
/// weight = 1 / (num_groups * G_g). Matches the 1/G sum inside the expectation.
SequenceBatch flatten_groups(std::span<const GroupBatch> groups);
SequenceBatch flatten_groups(std::vector<GroupBatch>&&) = delete;  // would dangle

/// Every sequence weighted 1 / n. Used for mini-batches that cut across groups.
SequenceBatch uniform_batch(std::span<const Trajectory* const> trajectories);

/// Gate outputs for each token of one sequence.
struct SequenceGates {
  std::vector<double> values;    // f
  std::vector<double> weights;   // f'
  std::vector<double> backward;  // multiplier of grad log pi * A / |y|: f' * r (token) or f' * s (GSPO)
  double tau = 0.0;              // SAPO temperature used (0 for clipped gates)
  double sequence_ratio = 1.0;   // s = exp(mean z)
};

SequenceGates gate_sequence(const TokenRatios& ratios, double advantage, const GateConfig& config);

struct SurrogateReport {
  double objective_value = 0.0;
  std::vector<std::vector<double>> token_gate_values;
  std::vector<std::vector<double>> token_gate_weights;
  double effective_token_fraction = 0.0;
};

SurrogateReport surrogate_value(const SequenceBatch& batch, const PolicyParams& current,
                                const GateConfig& config);
SurrogateReport surrogate_value(std::span<const GroupBatch> batch, const PolicyParams& current,
                                const GateConfig& config);

/// Exact gradient of surrogate_value with respect to the weights. Throws
/// NumericError naming the offending sequence/token if anything non-finite appears.
ParamGradient surrogate_gradient(const SequenceBatch& batch, const PolicyParams& current,
                                 const GateConfig& config);
ParamGradient surrogate_gradient(std::span<const GroupBatch> batch, const PolicyParams& current,
                                 const GateConfig& config);

/// Plain advantage-weighted log-likelihood gradient (no gate, no ratio).
ParamGradient vanilla_gradient(const SequenceBatch& batch, const PolicyParams& current);

/// Per-token gradient gates as used by surrogate_gradient.
std::vector<std::vector<double>> token_weight_profile(const SequenceBatch& batch,
                                                      const PolicyParams& current,
                                                      const GateConfig& config);
std::vector<std::vector<double>> token_weight_profile(std::span<const GroupBatch> batch,
                                                      const PolicyParams& current,
                                                      const GateConfig& config);

}  // namespace sapo
