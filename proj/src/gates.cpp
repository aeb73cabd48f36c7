#include "sapo/gates.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "sapo/errors.hpp"

namespace sapo {

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::SAPO: return "SAPO";
    case Algorithm::GRPO: return "GRPO";
    case Algorithm::GSPO: return "GSPO";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "SAPO") return Algorithm::SAPO;
  if (upper == "GRPO") return Algorithm::GRPO;
  if (upper == "GSPO") return Algorithm::GSPO;
  throw InputError("unknown algorithm '" + std::string(name) + "' (expected SAPO, GRPO or GSPO)");
}

void GateConfig::validate() const {
  if (!(tau_pos > 0.0) || !std::isfinite(tau_pos)) throw InputError("tau_pos must be positive");
  if (!(tau_neg > 0.0) || !std::isfinite(tau_neg)) throw InputError("tau_neg must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
}

GateConfig GateConfig::sapo(double tau_pos, double tau_neg) {
  GateConfig c;
  c.algorithm = Algorithm::SAPO;
  c.tau_pos = tau_pos;
  c.tau_neg = tau_neg;
  return c;
}

GateConfig GateConfig::grpo(double epsilon) {
  GateConfig c;
  c.algorithm = Algorithm::GRPO;
  c.epsilon = epsilon;
  return c;
}

GateConfig GateConfig::gspo(double epsilon) {
  GateConfig c;
  c.algorithm = Algorithm::GSPO;
  c.epsilon = epsilon;
  return c;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double select_tau(const GateConfig& config, double advantage) {
  return advantage > 0.0 ? config.tau_pos : config.tau_neg;
}

GateEval sapo_gate(double r, double tau) {
  const double x = tau * (r - 1.0);
  const double p = sigmoid(x);
  // 1 - p computed as sigmoid(-x) so the weight keeps relative precision in both tails.
  const double q = sigmoid(-x);
  return {p * 4.0 / tau, 4.0 * p * q};
}

GateEval grpo_gate(double r, double epsilon, double advantage) {
  if (advantage > 0.0) {
    const double hi = 1.0 + epsilon;
    return r <= hi ? GateEval{r, 1.0} : GateEval{hi, 0.0};
  }
  const double lo = 1.0 - epsilon;
  return r >= lo ? GateEval{r, 1.0} : GateEval{lo, 0.0};
}

double sequence_ratio(std::span<const double> log_ratios) {
  if (log_ratios.empty()) throw InputError("sequence_ratio: empty log-ratio list");
  double sum = 0.0;
  for (double z : log_ratios) {
    if (!std::isfinite(z)) throw InputError("sequence_ratio: non-finite log ratio");
    sum += z;
  }
  return std::exp(sum / static_cast<double>(log_ratios.size()));
}

GateEval gspo_gate(double s, double epsilon, double advantage) {
  return grpo_gate(s, epsilon, advantage);
}

double sech2(double x) {
  const double ax = std::abs(x);
  // sech(x) = 2 e^{-|x|} / (1 + e^{-2|x|})
  const double e = std::exp(-ax);
  const double sech = 2.0 * e / (1.0 + e * e);
  return sech * sech;
}

double seq_soft_gate(double mu, double tau) { return sech2(0.5 * tau * mu); }

double seq_soft_gate_second_derivative(double z, double tau) {
  const double alpha = 0.5 * tau;
  const double s2 = sech2(alpha * z);
  return alpha * alpha * (4.0 * s2 - 6.0 * s2 * s2);
}

}  // namespace sapo
