#include "sapo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sapo/errors.hpp"

namespace sapo {
namespace {

constexpr std::size_t kMaxJointFeatures = 1u << 20;

std::size_t checked_joint_size(int vocab_size, int window) {
  std::size_t joint = 1;
  for (int k = 0; k < window; ++k) {
    joint *= static_cast<std::size_t>(vocab_size + 1);
    if (joint > kMaxJointFeatures) {
      throw InputError("context_window too large for vocabulary: joint feature table exceeds " +
                       std::to_string(kMaxJointFeatures) + " entries");
    }
  }
  return joint;
}

}  // namespace

void Vocabulary::validate() const {
  if (size < 2) throw InputError("vocabulary size must be at least 2");
  if (eos_id < 0 || eos_id >= size) throw InputError("eos_id must lie in [0, vocab size)");
}

PolicyParams::PolicyParams(Vocabulary vocab, int context_window)
    : vocab_(vocab), context_window_(context_window) {
  vocab_.validate();
  if (context_window < 1) throw InputError("context_window must be positive");
  const std::size_t joint = checked_joint_size(vocab_.size, context_window_);
  feature_dim_ = 1 + static_cast<std::size_t>(context_window_) * (vocab_.size + 1) + joint;
  weights_.assign(static_cast<std::size_t>(vocab_.size) * feature_dim_, 0.0);
}

std::size_t PolicyParams::slot_feature(int slot, Token t) const {
  return 1 + static_cast<std::size_t>(slot) * (vocab_.size + 1) + static_cast<std::size_t>(t);
}

std::size_t PolicyParams::joint_feature(std::span<const Token> window) const {
  std::size_t index = 0;
  std::size_t stride = 1;
  for (Token t : window) {
    index += static_cast<std::size_t>(t) * stride;
    stride *= static_cast<std::size_t>(vocab_.size + 1);
  }
  return 1 + static_cast<std::size_t>(context_window_) * (vocab_.size + 1) + index;
}

std::vector<std::size_t> PolicyParams::active_features(std::span<const Token> history) const {
  for (Token t : history) {
    if (!vocab_.contains(t)) {
      throw InputError("token " + std::to_string(t) + " outside vocabulary of size " +
                       std::to_string(vocab_.size));
    }
  }
  std::vector<Token> window(context_window_, pad_symbol());
  const std::size_t n = history.size();
  for (int slot = 0; slot < context_window_ && static_cast<std::size_t>(slot) < n; ++slot) {
    window[slot] = history[n - 1 - slot];
  }
  std::vector<std::size_t> active;
  active.reserve(context_window_ + 2);
  active.push_back(bias_feature());
  for (int slot = 0; slot < context_window_; ++slot) active.push_back(slot_feature(slot, window[slot]));
  active.push_back(joint_feature(window));
  return active;
}

std::vector<double> PolicyParams::logits(std::span<const Token> history) const {
  const auto active = active_features(history);
  std::vector<double> out(vocab_.size, 0.0);
  for (Token v = 0; v < vocab_.size; ++v) {
    double acc = 0.0;
    for (std::size_t f : active) acc += weight(v, f);
    out[v] = acc;
  }
  return out;
}

bool PolicyParams::all_finite() const {
  return std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); });
}

void PolicyParams::randomize(double scale, Rng& rng) {
  for (double& w : weights_) w = scale * (2.0 * rng.uniform() - 1.0);
}

TokenSeq Trajectory::history(std::size_t t) const {
  TokenSeq h;
  h.reserve(query.size() + t);
  h.insert(h.end(), query.begin(), query.end());
  h.insert(h.end(), response.begin(), response.begin() + static_cast<std::ptrdiff_t>(t));
  return h;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - peak);
  const double log_norm = peak + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<double> token_distribution(const PolicyParams& params, std::span<const Token> context) {
  return softmax(params.logits(context));
}

std::vector<double> sequence_log_probs(const PolicyParams& params, std::span<const Token> query,
                                       std::span<const Token> response) {
  if (response.empty()) throw InputError("sequence_log_probs: response must be nonempty");
  TokenSeq history(query.begin(), query.end());
  history.reserve(query.size() + response.size());
  std::vector<double> out;
  out.reserve(response.size());
  for (Token y : response) {
    if (!params.vocab().contains(y)) {
      throw InputError("response token " + std::to_string(y) + " outside vocabulary");
    }
    const auto logp = log_softmax(params.logits(history));
    out.push_back(logp[y]);
    history.push_back(y);
  }
  return out;
}

Trajectory sample_sequence(const PolicyParams& params, const TokenSeq& query, int max_len, Rng& rng) {
  if (max_len < 1) throw InputError("sample_sequence: max_len must be at least 1");
  Trajectory traj;
  traj.query = query;
  TokenSeq history = query;
  for (int step = 0; step < max_len; ++step) {
    const auto logits = params.logits(history);
    const auto probs = softmax(logits);
    const auto logp = log_softmax(logits);
    const Token y = static_cast<Token>(rng.categorical(probs));
    traj.response.push_back(y);
    traj.behavior_logprobs.push_back(logp[y]);
    history.push_back(y);
    if (y == params.vocab().eos_id) break;
  }
  return traj;
}

LogitGradient logit_gradient(std::span<const double> probs, Token sampled_token, double advantage) {
  if (sampled_token < 0 || static_cast<std::size_t>(sampled_token) >= probs.size()) {
    throw InputError("logit_gradient: sampled token outside distribution support");
  }
  LogitGradient g(probs.size());
  for (std::size_t v = 0; v < probs.size(); ++v) g[v] = -probs[v] * advantage;
  g[sampled_token] = (1.0 - probs[sampled_token]) * advantage;
  return g;
}

void add_log_prob_gradient(const PolicyParams& params, std::span<const std::size_t> active,
                           std::span<const double> probs, Token token, double coefficient,
                           std::span<double> grad) {
  if (coefficient == 0.0) return;
  const auto row = logit_gradient(probs, token, coefficient);
  const std::size_t dim = params.feature_dim();
  for (std::size_t v = 0; v < row.size(); ++v) {
    double* dst = grad.data() + v * dim;
    for (std::size_t f : active) dst[f] += row[v];
  }
}

ParamGradient accumulate_param_gradient(const PolicyParams& params, std::span<const WeightedTerm> terms) {
  ParamGradient grad(params.size(), 0.0);
  for (const auto& term : terms) {
    if (!std::isfinite(term.coefficient)) {
      throw InputError("accumulate_param_gradient: non-finite coefficient");
    }
    if (!params.vocab().contains(term.token)) {
      throw InputError("accumulate_param_gradient: token outside vocabulary");
    }
    const auto active = params.active_features(term.context);
    const auto probs = token_distribution(params, term.context);
    add_log_prob_gradient(params, active, probs, term.token, term.coefficient, grad);
  }
  return grad;
}

}  // namespace sapo
