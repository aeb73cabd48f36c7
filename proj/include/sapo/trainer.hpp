#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sapo/gates.hpp"
#include "sapo/objective.hpp"
#include "sapo/policy.hpp"
#include "sapo/tasks.hpp"

namespace sapo {

enum class OptimizerKind { SGD, Adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::SGD;
  double learning_rate = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Gradient-ascent optimizer over a flat weight vector.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t size);

  void ascend(std::span<double> weights, std::span<const double> gradient);

 private:
  OptimizerConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t step_ = 0;
};

/// Reward-collapse detector: the trailing `window`-batch mean training reward
/// stays below `fraction` of its running peak for `patience` consecutive batches.
struct CollapseRule {
  int window = 10;
  double fraction = 0.25;
  int patience = 20;
};

class CollapseDetector {
 public:
  explicit CollapseDetector(CollapseRule rule);

  /// Feeds one batch's mean training reward; true once the rule fires.
  bool update(double reward);

 private:
  CollapseRule rule_;
  std::deque<double> recent_;
  double peak_ = 0.0;
  int below_ = 0;
};

struct PolicyConfig {
  int context_window = 2;
  double init_scale = 0.0;  // weights ~ U(-init_scale, init_scale); 0 gives the uniform policy
};

struct TrainConfig {
  TaskSpec task;
  GateConfig gate;
  PolicyConfig policy;
  OptimizerConfig optimizer;
  int group_size = 8;
  int queries_per_batch = 8;
  int minibatches = 4;
  int total_batches = 200;
  int max_len = 16;
  int eval_every = 10;  // 0 disables periodic evaluation
  int eval_samples_per_query = 16;
  double std_floor = kDefaultStdFloor;
  CollapseRule collapse;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricsRecord {
  int batch = 0;
  double mean_train_reward = 0.0;
  std::optional<double> eval_pass_rate;
  double grad_norm = 0.0;   // mean L2 norm over the batch's mini-batch steps
  double mean_ratio = 1.0;  // token ratios at the moment each mini-batch is used
  double max_ratio = 1.0;
  double ratio_within_0p1 = 1.0;  // fraction of those ratios with |r - 1| <= 0.1
  double effective_token_fraction = 1.0;
  std::int64_t version_tag = 0;
  bool diverged = false;
};

/// What an observer sees right before each optimizer step.
struct StepView {
  int batch;
  int minibatch;
  const SequenceBatch& sequences;
  const PolicyParams& params;
  const GateConfig& gate;
};

using StepObserver = std::function<void(const StepView&)>;

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  PolicyParams final_params;
  std::optional<double> initial_pass_rate;
  std::optional<int> divergence_batch;
};

/// Runs the rollout / group-normalize / mini-batch-update loop. Never throws
/// on numerical blow-up: divergence is reported on the final record.
TrainResult train(const TrainConfig& config, const StepObserver& observer = {});

/// Mean over queries of the mean reward of n sampled responses (temperature 1).
double evaluate(const PolicyParams& params, const TaskSpec& task, std::span<const TokenSeq> queries,
                int samples_per_query, int max_len, Rng& rng);

struct VariantOutcome {
  GateConfig gate;
  TrainResult result;
  double final_pass_rate = 0.0;
};

/// Trains once per gate variant with the base config's seed and schedule.
std::vector<VariantOutcome> stability_experiment(const TrainConfig& base, std::span<const GateConfig> variants);

}  // namespace sapo
