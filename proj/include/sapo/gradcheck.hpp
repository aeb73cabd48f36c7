#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sapo/gates.hpp"
#include "sapo/grouping.hpp"
#include "sapo/objective.hpp"
#include "sapo/policy.hpp"

namespace sapo {

struct GradcheckOptions {
  int batches = 100;
  int vocab_size = 5;
  int context_window = 2;
  int groups = 2;
  int group_size = 4;
  int max_len = 3;
  double init_scale = 1.0;
  // Behavior weights = current weights + U(-p, p), with p drawn log-uniformly from this range.
  double min_perturbation = 1e-3;
  double max_perturbation = 0.5;
  double step = 1e-5;
  double margin = 1e-3;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf); 0 when both vanish.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central differences of surrogate_value(batch, ., gate) at `params`.
ParamGradient finite_difference_gradient(const SequenceBatch& batch, const PolicyParams& params,
                                         const GateConfig& gate, double step);

/// True if any token ratio (GRPO) or sequence ratio (GSPO) lies within
/// `margin` of a clip edge 1 +/- epsilon. Always false for SAPO.
bool near_clip_boundary(const SequenceBatch& batch, const PolicyParams& params, const GateConfig& gate,
                        double margin);

/// A small randomized problem: current params plus groups sampled from a
/// perturbed behavior policy, scored with random rewards.
struct GradcheckProblem {
  PolicyParams params;
  std::vector<GroupBatch> groups;
};

GradcheckProblem make_gradcheck_problem(const GradcheckOptions& options, std::uint64_t index);

struct GradcheckSummary {
  Algorithm algorithm;
  double max_relative_error = 0.0;
  int checked = 0;
  int skipped = 0;
};

std::vector<GradcheckSummary> run_gradcheck(const GradcheckOptions& options, std::span<const GateConfig> gates);

}  // namespace sapo
