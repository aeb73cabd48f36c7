#include "sapo/objective.hpp"

#include <cmath>

#include "sapo/errors.hpp"

namespace sapo {
namespace {

// Current-policy quantities for every position of one response.
struct PositionCache {
  std::vector<std::vector<std::size_t>> active;
  std::vector<std::vector<double>> probs;
  TokenRatios ratios;
};

PositionCache evaluate_positions(const PolicyParams& params, const Trajectory& traj, std::size_t seq_index,
                                 bool keep_probs) {
  if (traj.response.empty()) throw InputError("trajectory has an empty response");
  if (traj.behavior_logprobs.size() != traj.response.size()) {
    throw InternalError("behavior_logprobs length does not match response length for sequence " +
                        std::to_string(seq_index));
  }
  PositionCache cache;
  const std::size_t len = traj.response.size();
  cache.ratios.ratios.resize(len);
  cache.ratios.log_ratios.resize(len);
  if (keep_probs) {
    cache.active.resize(len);
    cache.probs.resize(len);
  }
  TokenSeq history = traj.query;
  for (std::size_t t = 0; t < len; ++t) {
    const Token y = traj.response[t];
    auto active = params.active_features(history);
    std::vector<double> logits(params.vocab().size, 0.0);
    for (Token v = 0; v < params.vocab().size; ++v) {
      for (std::size_t f : active) logits[v] += params.weight(v, f);
    }
    const auto logp = log_softmax(logits);
    const double z = logp[y] - traj.behavior_logprobs[t];
    if (!std::isfinite(z)) throw NumericError("non-finite log ratio", seq_index, t);
    cache.ratios.log_ratios[t] = z;
    cache.ratios.ratios[t] = std::exp(z);
    if (keep_probs) {
      cache.probs[t] = softmax(logits);
      cache.active[t] = std::move(active);
    }
    history.push_back(y);
  }
  return cache;
}

void check_finite(double x, const char* what, std::size_t seq, std::size_t token) {
  if (!std::isfinite(x)) throw NumericError(what, seq, token);
}

}  // namespace

SequenceBatch flatten_groups(std::span<const GroupBatch> groups) {
  SequenceBatch out;
  if (groups.empty()) return out;
  const double group_weight = 1.0 / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    if (g.trajectories.empty()) continue;
    const double w = group_weight / static_cast<double>(g.trajectories.size());
    for (const auto& traj : g.trajectories) out.push_back({&traj, w});
  }
  return out;
}

SequenceBatch uniform_batch(std::span<const Trajectory* const> trajectories) {
  SequenceBatch out;
  if (trajectories.empty()) return out;
  const double w = 1.0 / static_cast<double>(trajectories.size());
  for (const Trajectory* t : trajectories) out.push_back({t, w});
  return out;
}

SequenceGates gate_sequence(const TokenRatios& ratios, double advantage, const GateConfig& config) {
  const std::size_t len = ratios.ratios.size();
  SequenceGates gates;
  gates.values.resize(len);
  gates.weights.resize(len);
  gates.backward.resize(len);
  gates.sequence_ratio = sequence_ratio(ratios.log_ratios);
  switch (config.algorithm) {
    case Algorithm::SAPO: {
      gates.tau = select_tau(config, advantage);
      for (std::size_t t = 0; t < len; ++t) {
        const auto g = sapo_gate(ratios.ratios[t], gates.tau);
        gates.values[t] = g.value;
        gates.weights[t] = g.weight;
        gates.backward[t] = g.weight * ratios.ratios[t];
      }
      break;
    }
    case Algorithm::GRPO: {
      for (std::size_t t = 0; t < len; ++t) {
        const auto g = grpo_gate(ratios.ratios[t], config.epsilon, advantage);
        gates.values[t] = g.value;
        gates.weights[t] = g.weight;
        gates.backward[t] = g.weight * ratios.ratios[t];
      }
      break;
    }
    case Algorithm::GSPO: {
      // s_{i,t} = sg[s_i] * pi / sg[pi]: evaluates to s_i, differentiates as s_i * grad log pi.
      const double s = gates.sequence_ratio;
      const auto g = gspo_gate(s, config.epsilon, advantage);
      for (std::size_t t = 0; t < len; ++t) {
        gates.values[t] = g.value;
        gates.weights[t] = g.weight;
        gates.backward[t] = g.weight * s;
      }
      break;
    }
  }
  return gates;
}

SurrogateReport surrogate_value(const SequenceBatch& batch, const PolicyParams& current,
                                const GateConfig& config) {
  config.validate();
  SurrogateReport report;
  report.token_gate_values.reserve(batch.size());
  report.token_gate_weights.reserve(batch.size());
  double weight_sum = 0.0;
  std::size_t token_count = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& traj = *batch[i].trajectory;
    const auto cache = evaluate_positions(current, traj, i, false);
    auto gates = gate_sequence(cache.ratios, traj.advantage, config);
    const double len = static_cast<double>(traj.response.size());
    double seq_sum = 0.0;
    for (std::size_t t = 0; t < gates.values.size(); ++t) {
      check_finite(gates.values[t], "non-finite gate value", i, t);
      seq_sum += gates.values[t] * traj.advantage;
      weight_sum += gates.weights[t];
    }
    token_count += gates.values.size();
    report.objective_value += batch[i].weight * seq_sum / len;
    report.token_gate_values.push_back(std::move(gates.values));
    report.token_gate_weights.push_back(std::move(gates.weights));
  }
  if (token_count > 0) report.effective_token_fraction = weight_sum / static_cast<double>(token_count);
  return report;
}

SurrogateReport surrogate_value(std::span<const GroupBatch> batch, const PolicyParams& current,
                                const GateConfig& config) {
  return surrogate_value(flatten_groups(batch), current, config);
}

ParamGradient surrogate_gradient(const SequenceBatch& batch, const PolicyParams& current,
                                 const GateConfig& config) {
  config.validate();
  ParamGradient grad(current.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& traj = *batch[i].trajectory;
    if (traj.advantage == 0.0 || batch[i].weight == 0.0) continue;
    const auto cache = evaluate_positions(current, traj, i, true);
    const auto gates = gate_sequence(cache.ratios, traj.advantage, config);
    const double scale = batch[i].weight * traj.advantage / static_cast<double>(traj.response.size());
    for (std::size_t t = 0; t < traj.response.size(); ++t) {
      const double coef = gates.backward[t] * scale;
      check_finite(coef, "non-finite backward coefficient", i, t);
      add_log_prob_gradient(current, cache.active[t], cache.probs[t], traj.response[t], coef, grad);
    }
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("non-finite parameter gradient", 0, 0);
  }
  return grad;
}

ParamGradient surrogate_gradient(std::span<const GroupBatch> batch, const PolicyParams& current,
                                 const GateConfig& config) {
  return surrogate_gradient(flatten_groups(batch), current, config);
}

ParamGradient vanilla_gradient(const SequenceBatch& batch, const PolicyParams& current) {
  std::vector<WeightedTerm> terms;
  for (const auto& entry : batch) {
    const Trajectory& traj = *entry.trajectory;
    const double scale = entry.weight * traj.advantage / static_cast<double>(traj.response.size());
    for (std::size_t t = 0; t < traj.response.size(); ++t) {
      terms.push_back({traj.history(t), traj.response[t], scale});
    }
  }
  return accumulate_param_gradient(current, terms);
}

std::vector<std::vector<double>> token_weight_profile(const SequenceBatch& batch,
                                                      const PolicyParams& current,
                                                      const GateConfig& config) {
  config.validate();
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto cache = evaluate_positions(current, *batch[i].trajectory, i, false);
    out.push_back(gate_sequence(cache.ratios, batch[i].trajectory->advantage, config).weights);
  }
  return out;
}

std::vector<std::vector<double>> token_weight_profile(std::span<const GroupBatch> batch,
                                                      const PolicyParams& current,
                                                      const GateConfig& config) {
  return token_weight_profile(flatten_groups(batch), current, config);
}

}  // namespace sapo
