#pragma once

// Test-only helpers and independent oracles. Nothing here calls the
// gradient code under test.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sapo/grouping.hpp"
#include "sapo/objective.hpp"
#include "sapo/policy.hpp"
#include "sapo/random.hpp"

namespace sapo::testing {

inline PolicyParams random_params(int vocab, int window, double scale, std::uint64_t seed) {
  PolicyParams p(Vocabulary{vocab, 0}, window);
  Rng rng(seed);
  p.randomize(scale, rng);
  return p;
}

/// Trajectory whose behavior log-probs come from `behavior`.
inline Trajectory make_trajectory(const PolicyParams& behavior, TokenSeq query, TokenSeq response,
                                  double advantage) {
  Trajectory t;
  t.query = std::move(query);
  t.response = std::move(response);
  t.behavior_logprobs = sequence_log_probs(behavior, t.query, t.response);
  t.advantage = advantage;
  return t;
}

/// Central finite differences of an arbitrary scalar function of the weights.
inline std::vector<double> central_difference(const PolicyParams& params,
                                              const std::function<double(const PolicyParams&)>& f,
                                              double h) {
  PolicyParams probe = params;
  std::vector<double> out(params.size());
  auto w = probe.weights();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double saved = w[k];
    w[k] = saved + h;
    const double up = f(probe);
    w[k] = saved - h;
    const double down = f(probe);
    w[k] = saved;
    out[k] = (up - down) / (2 * h);
  }
  return out;
}

/// log pi(token | context) straight from the softmax definition.
inline double direct_log_prob(const PolicyParams& p, const TokenSeq& context, Token token) {
  const auto logits = p.logits(context);
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z);
  return logits[token] - std::log(denom);
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double normwise_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, std::abs(a[k] - b[k]));
    scale = std::max({scale, std::abs(a[k]), std::abs(b[k])});
  }
  return scale > 0 ? diff / scale : 0.0;
}

/// Sets the bias-feature weights so the policy's logits equal `logits` for every context.
inline void set_bias_logits(PolicyParams& p, const std::vector<double>& logits) {
  for (Token v = 0; v < p.vocab().size; ++v) p.weight(v, p.bias_feature()) = logits[v];
}

}  // namespace sapo::testing
