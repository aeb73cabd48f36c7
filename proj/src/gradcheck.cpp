#include "sapo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sapo/errors.hpp"

namespace sapo {

void GradcheckOptions::validate() const {
  if (batches < 0) throw InputError("gradcheck batches must be non-negative");
  if (groups < 1 || group_size < 2) throw InputError("gradcheck needs groups >= 1 and group_size >= 2");
  if (max_len < 1) throw InputError("gradcheck max_len must be positive");
  if (!(step > 0.0)) throw InputError("gradcheck step must be positive");
  if (!(margin >= 0.0)) throw InputError("gradcheck margin must be non-negative");
  if (!(tolerance > 0.0)) throw InputError("gradcheck tolerance must be positive");
  if (!(min_perturbation > 0.0 && max_perturbation >= min_perturbation)) {
    throw InputError("gradcheck perturbation range must satisfy 0 < min <= max");
  }
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw InternalError("relative_error: size mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
    scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
  }
  return scale > 0.0 ? diff / scale : 0.0;
}

ParamGradient finite_difference_gradient(const SequenceBatch& batch, const PolicyParams& params,
                                         const GateConfig& gate, double step) {
  PolicyParams probe = params;
  ParamGradient out(params.size(), 0.0);
  auto w = probe.weights();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double saved = w[k];
    w[k] = saved + step;
    const double up = surrogate_value(batch, probe, gate).objective_value;
    w[k] = saved - step;
    const double down = surrogate_value(batch, probe, gate).objective_value;
    w[k] = saved;
    out[k] = (up - down) / (2.0 * step);
  }
  return out;
}

bool near_clip_boundary(const SequenceBatch& batch, const PolicyParams& params, const GateConfig& gate,
                        double margin) {
  if (gate.algorithm == Algorithm::SAPO) return false;
  const double hi = 1.0 + gate.epsilon;
  const double lo = 1.0 - gate.epsilon;
  auto near = [&](double r) { return std::abs(r - hi) < margin || std::abs(r - lo) < margin; };
  for (const auto& entry : batch) {
    const auto ratios = compute_ratios(params, *entry.trajectory);
    if (gate.algorithm == Algorithm::GSPO) {
      if (near(sequence_ratio(ratios.log_ratios))) return true;
    } else {
      for (double r : ratios.ratios) {
        if (near(r)) return true;
      }
    }
  }
  return false;
}

GradcheckProblem make_gradcheck_problem(const GradcheckOptions& options, std::uint64_t index) {
  Rng rng(derive_seed(options.seed, 0x6772616463686bULL, index));
  Vocabulary vocab{options.vocab_size, 0};
  PolicyParams current(vocab, options.context_window);
  current.randomize(options.init_scale, rng);

  const double log_lo = std::log(options.min_perturbation);
  const double log_hi = std::log(options.max_perturbation);
  const double perturbation = std::exp(log_lo + (log_hi - log_lo) * rng.uniform());
  PolicyParams behavior = current;
  for (double& w : behavior.weights()) w += perturbation * (2.0 * rng.uniform() - 1.0);

  GradcheckProblem problem{std::move(current), {}};
  const RewardFn random_reward = [&rng](const TokenSeq&, const TokenSeq&) { return rng.uniform(); };
  for (int g = 0; g < options.groups; ++g) {
    const TokenSeq query{static_cast<Token>(1 + rng.below(static_cast<std::uint64_t>(options.vocab_size - 1)))};
    problem.groups.push_back(build_group(behavior, query, options.group_size, random_reward, options.max_len, rng));
  }
  return problem;
}

std::vector<GradcheckSummary> run_gradcheck(const GradcheckOptions& options, std::span<const GateConfig> gates) {
  options.validate();
  std::vector<GradcheckSummary> out;
  for (const auto& gate : gates) {
    GradcheckSummary summary{gate.algorithm};
    for (int i = 0; i < options.batches; ++i) {
      const auto problem = make_gradcheck_problem(options, static_cast<std::uint64_t>(i));
      const auto batch = flatten_groups(problem.groups);
      if (near_clip_boundary(batch, problem.params, gate, options.margin)) {
        ++summary.skipped;
        continue;
      }
      const auto analytic = surrogate_gradient(batch, problem.params, gate);
      const auto numeric = finite_difference_gradient(batch, problem.params, gate, options.step);
      summary.max_relative_error = std::max(summary.max_relative_error, relative_error(analytic, numeric));
      ++summary.checked;
    }
    out.push_back(summary);
  }
  return out;
}

}  // namespace sapo
