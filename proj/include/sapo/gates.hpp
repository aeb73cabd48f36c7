#pragma once

#include <span>
#include <string>
#include <string_view>

namespace sapo {

enum class Algorithm { SAPO, GRPO, GSPO };

std::string_view to_string(Algorithm algorithm);
/// Case-insensitive; throws InputError on unknown names.
Algorithm parse_algorithm(std::string_view name);

inline constexpr double kDefaultTauPos = 1.0;
inline constexpr double kDefaultTauNeg = 1.05;
inline constexpr double kDefaultGrpoEpsilon = 0.2;
inline constexpr double kDefaultGspoEpsilon = 0.003;

struct GateConfig {
  Algorithm algorithm = Algorithm::SAPO;
  double tau_pos = kDefaultTauPos;
  double tau_neg = kDefaultTauNeg;
  double epsilon = kDefaultGrpoEpsilon;

  void validate() const;

  static GateConfig sapo(double tau_pos = kDefaultTauPos, double tau_neg = kDefaultTauNeg);
  static GateConfig grpo(double epsilon = kDefaultGrpoEpsilon);
  static GateConfig gspo(double epsilon = kDefaultGspoEpsilon);
};

/// A gate's surrogate factor f and its derivative f' (the gradient gate).
struct GateEval {
  double value;
  double weight;
};

/// Logistic function, evaluated on the branch that cannot overflow.
double sigmoid(double x);

/// tau_pos for strictly positive advantage, tau_neg otherwise (zero included).
double select_tau(const GateConfig& config, double advantage);

/// f(r) = 4/tau * sigmoid(tau (r - 1)), f'(r) = 4 p (1 - p) with p = sigmoid(tau (r - 1)).
GateEval sapo_gate(double r, double tau);

/// One-sided PPO-style clip. Boundary ratios count as in-band (weight 1).
GateEval grpo_gate(double r, double epsilon, double advantage);

/// Geometric mean of token ratios given their logs: exp(mean(log_ratios)).
double sequence_ratio(std::span<const double> log_ratios);

/// Sequence-level clip of s; same band semantics as grpo_gate.
GateEval gspo_gate(double s, double epsilon, double advantage);

/// g_tau(mu) = sech^2(tau * mu / 2).
double seq_soft_gate(double mu, double tau);

/// Second derivative of g_tau: alpha^2 (4 sech^2(alpha z) - 6 sech^4(alpha z)), alpha = tau/2.
double seq_soft_gate_second_derivative(double z, double tau);

/// sech^2(x), well defined for all finite x.
double sech2(double x);

}  // namespace sapo
