#include "sapo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <string>

#include "sapo/errors.hpp"
#include "sapo/grouping.hpp"

namespace sapo {
namespace {

enum Stream : std::uint64_t { kInit = 1, kQuery = 2, kRollout = 3, kPartition = 4, kEval = 5 };

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

CollapseDetector::CollapseDetector(CollapseRule rule) : rule_(rule) {}

bool CollapseDetector::update(double reward) {
  recent_.push_back(reward);
  if (static_cast<int>(recent_.size()) > rule_.window) recent_.pop_front();
  const double mean = std::accumulate(recent_.begin(), recent_.end(), 0.0) / static_cast<double>(recent_.size());
  peak_ = std::max(peak_, mean);
  below_ = mean < rule_.fraction * peak_ ? below_ + 1 : 0;
  return below_ >= rule_.patience;
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::SGD ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "adam") return OptimizerKind::Adam;
  throw InputError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("learning_rate must be finite and non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InputError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InputError("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InputError("optimizer epsilon must be positive");
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t size) : config_(config) {
  if (config_.kind == OptimizerKind::Adam) {
    m_.assign(size, 0.0);
    v_.assign(size, 0.0);
  }
}

void Optimizer::ascend(std::span<double> weights, std::span<const double> gradient) {
  if (weights.size() != gradient.size()) throw InternalError("optimizer: gradient shape mismatch");
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::SGD) {
    for (std::size_t k = 0; k < weights.size(); ++k) weights[k] += lr * gradient[k];
    return;
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < weights.size(); ++k) {
    m_[k] = b1 * m_[k] + (1.0 - b1) * gradient[k];
    v_[k] = b2 * v_[k] + (1.0 - b2) * gradient[k] * gradient[k];
    weights[k] += lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + config_.epsilon);
  }
}

void TrainConfig::validate() const {
  task.validate();
  gate.validate();
  optimizer.validate();
  if (policy.context_window < 1) throw InputError("context_window must be positive");
  if (!(policy.init_scale >= 0.0)) throw InputError("init_scale must be non-negative");
  if (group_size < 2) throw InputError("group_size must be at least 2");
  if (queries_per_batch < 1) throw InputError("queries_per_batch must be positive");
  if (minibatches < 1) throw InputError("minibatches must be at least 1");
  if (total_batches < 0) throw InputError("total_batches must be non-negative");
  if (max_len < 1) throw InputError("max_len must be positive");
  if (eval_every < 0) throw InputError("eval_every must be non-negative");
  if (eval_samples_per_query < 1) throw InputError("eval_samples_per_query must be positive");
  if (!(std_floor > 0.0)) throw InputError("std_floor must be positive");
  if (collapse.window < 1 || collapse.patience < 1) throw InputError("collapse window and patience must be positive");
  if (!(collapse.fraction > 0.0 && collapse.fraction <= 1.0)) throw InputError("collapse fraction must lie in (0, 1]");
}

double evaluate(const PolicyParams& params, const TaskSpec& task, std::span<const TokenSeq> queries,
                int samples_per_query, int max_len, Rng& rng) {
  if (samples_per_query < 1) throw InputError("evaluate: samples_per_query must be positive");
  if (queries.empty()) throw InputError("evaluate: no queries");
  double total = 0.0;
  for (const auto& q : queries) {
    double sum = 0.0;
    for (int n = 0; n < samples_per_query; ++n) {
      const auto traj = sample_sequence(params, q, max_len, rng);
      sum += reward(task, q, traj.response);
    }
    total += sum / samples_per_query;
  }
  return total / static_cast<double>(queries.size());
}

TrainResult train(const TrainConfig& config, const StepObserver& observer) {
  config.validate();
  PolicyParams params(config.task.vocab, config.policy.context_window);
  if (config.policy.init_scale > 0.0) {
    Rng init_rng(derive_seed(config.seed, kInit));
    params.randomize(config.policy.init_scale, init_rng);
  }
  Optimizer optimizer(config.optimizer, params.size());
  const RewardFn reward_fn = [&task = config.task](const TokenSeq& q, const TokenSeq& y) {
    return reward(task, q, y);
  };
  auto run_eval = [&](std::uint64_t tag) {
    Rng rng(derive_seed(config.seed, kEval, tag));
    return evaluate(params, config.task, config.task.query_pool, config.eval_samples_per_query, config.max_len, rng);
  };

  TrainResult result{{}, params, std::nullopt, std::nullopt};
  if (config.eval_every > 0) result.initial_pass_rate = run_eval(0);

  CollapseDetector collapse(config.collapse);
  for (int b = 0; b < config.total_batches; ++b) {
    MetricsRecord rec;
    rec.batch = b;

    // Rollout under the behavior snapshot: log-probs are frozen into each trajectory here.
    std::vector<GroupBatch> groups;
    groups.reserve(config.queries_per_batch);
    Rng query_rng(derive_seed(config.seed, kQuery, static_cast<std::uint64_t>(b)));
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (int g = 0; g < config.queries_per_batch; ++g) {
      const TokenSeq& query = sample_query(config.task, query_rng);
      Rng rollout_rng(derive_seed(config.seed, kRollout, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(g)));
      groups.push_back(build_group(params, query, config.group_size, reward_fn, config.max_len, rollout_rng,
                                   config.std_floor));
      for (const auto& traj : groups.back().trajectories) {
        reward_sum += traj.reward;
        ++reward_count;
      }
    }
    rec.mean_train_reward = reward_sum / static_cast<double>(reward_count);

    std::vector<const Trajectory*> order;
    for (const auto& g : groups) {
      for (const auto& traj : g.trajectories) order.push_back(&traj);
    }
    Rng partition_rng(derive_seed(config.seed, kPartition, static_cast<std::uint64_t>(b)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[partition_rng.below(i)]);
    }

    const std::size_t n = order.size();
    const std::size_t chunks = std::min<std::size_t>(config.minibatches, n);
    double grad_norm_sum = 0.0;
    double ratio_sum = 0.0;
    double ratio_max = 0.0;
    std::size_t ratio_count = 0;
    std::size_t ratio_inside = 0;
    double weight_sum = 0.0;
    bool diverged = false;
    for (std::size_t m = 0; m < chunks && !diverged; ++m) {
      const std::size_t begin = m * n / chunks;
      const std::size_t end = (m + 1) * n / chunks;
      const SequenceBatch batch =
          uniform_batch(std::span<const Trajectory* const>(order.data() + begin, end - begin));
      if (observer) observer(StepView{b, static_cast<int>(m), batch, params, config.gate});
      try {
        const auto report = surrogate_value(batch, params, config.gate);
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const auto ratios = compute_ratios(params, *batch[i].trajectory);
          for (double r : ratios.ratios) {
            ratio_sum += r;
            ratio_max = std::max(ratio_max, r);
            if (std::abs(r - 1.0) <= 0.1) ++ratio_inside;
            ++ratio_count;
          }
          for (double w : report.token_gate_weights[i]) weight_sum += w;
        }
        const auto grad = surrogate_gradient(batch, params, config.gate);
        grad_norm_sum += l2_norm(grad);
        optimizer.ascend(params.weights(), grad);
        params.bump_version();
      } catch (const NumericError&) {
        diverged = true;
      }
      if (!params.all_finite()) diverged = true;
    }
    rec.grad_norm = chunks > 0 ? grad_norm_sum / static_cast<double>(chunks) : 0.0;
    if (ratio_count > 0) {
      rec.mean_ratio = ratio_sum / static_cast<double>(ratio_count);
      rec.max_ratio = ratio_max;
      rec.ratio_within_0p1 = static_cast<double>(ratio_inside) / static_cast<double>(ratio_count);
      rec.effective_token_fraction = weight_sum / static_cast<double>(ratio_count);
    }
    rec.version_tag = params.version_tag();

    if (!diverged && collapse.update(rec.mean_train_reward)) diverged = true;
    const bool last = b + 1 == config.total_batches;
    if (!diverged && config.eval_every > 0 && ((b + 1) % config.eval_every == 0 || last)) {
      rec.eval_pass_rate = run_eval(static_cast<std::uint64_t>(b) + 1);
    }
    rec.diverged = diverged;
    result.metrics.push_back(rec);
    if (diverged) {
      result.divergence_batch = b;
      break;
    }
  }
  result.final_params = std::move(params);
  return result;
}

std::vector<VariantOutcome> stability_experiment(const TrainConfig& base, std::span<const GateConfig> variants) {
  if (variants.empty()) throw InputError("stability_experiment: no variants");
  std::vector<VariantOutcome> out;
  out.reserve(variants.size());
  for (const auto& gate : variants) {
    TrainConfig cfg = base;
    cfg.gate = gate;
    VariantOutcome outcome{gate, train(cfg), 0.0};
    for (auto it = outcome.result.metrics.rbegin(); it != outcome.result.metrics.rend(); ++it) {
      if (it->eval_pass_rate) {
        outcome.final_pass_rate = *it->eval_pass_rate;
        break;
      }
    }
    if (outcome.result.divergence_batch) outcome.final_pass_rate = 0.0;
    out.push_back(std::move(outcome));
  }
  return out;
}

}  // namespace sapo
