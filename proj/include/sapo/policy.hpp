#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sapo/random.hpp"

namespace sapo {

using Token = int;
using TokenSeq = std::vector<Token>;

struct Vocabulary {
  int size = 16;
  Token eos_id = 0;

  bool contains(Token t) const { return t >= 0 && t < size; }
  void validate() const;
};

/// Weights of a fixed-window linear-softmax policy.
///
/// The logits for the next token depend on the last `context_window` tokens of
/// (query ++ response prefix), left-padded with a pad symbol. Three groups of
/// one-hot features are active for every context:
///   - a bias feature,
///   - one one-hot block per window slot (slot 0 is the most recent token),
///   - one one-hot over the joint window tuple.
/// Weights are stored row-major as [vocab_size][feature_dim].
class PolicyParams {
 public:
  PolicyParams(Vocabulary vocab, int context_window);

  const Vocabulary& vocab() const { return vocab_; }
  int context_window() const { return context_window_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t size() const { return weights_.size(); }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }

  double& weight(Token v, std::size_t feature) { return weights_[v * feature_dim_ + feature]; }
  double weight(Token v, std::size_t feature) const { return weights_[v * feature_dim_ + feature]; }

  std::int64_t version_tag() const { return version_tag_; }
  void set_version_tag(std::int64_t tag) { version_tag_ = tag; }
  void bump_version() { ++version_tag_; }

  /// Indices of the features that are 1 for this history. Only the last
  /// context_window tokens are read. Throws InputError on invalid tokens.
  std::vector<std::size_t> active_features(std::span<const Token> history) const;

  std::size_t bias_feature() const { return 0; }
  std::size_t slot_feature(int slot, Token t) const;
  std::size_t joint_feature(std::span<const Token> window) const;
  Token pad_symbol() const { return vocab_.size; }

  std::vector<double> logits(std::span<const Token> history) const;

  bool all_finite() const;

  /// Fills every weight with U(-scale, scale).
  void randomize(double scale, Rng& rng);

 private:
  Vocabulary vocab_;
  int context_window_;
  std::size_t feature_dim_;
  std::vector<double> weights_;
  std::int64_t version_tag_ = 0;
};

/// Per-token record of one sampled response.
struct Trajectory {
  TokenSeq query;
  TokenSeq response;
  std::vector<double> behavior_logprobs;
  double reward = 0.0;
  double advantage = 0.0;

  /// query ++ response[0, t): the history that conditions response[t].
  TokenSeq history(std::size_t t) const;
};

/// d(log pi(sampled) * advantage) / d logits for one position.
using LogitGradient = std::vector<double>;

/// Parameter-shaped gradient buffer (same layout as PolicyParams::weights()).
using ParamGradient = std::vector<double>;

/// One coefficient-weighted log-likelihood term: coef * log pi(token | context).
struct WeightedTerm {
  TokenSeq context;
  Token token;
  double coefficient;
};

/// Max-subtracted softmax over the policy's logits for `context`.
std::vector<double> token_distribution(const PolicyParams& params, std::span<const Token> context);

/// Stable log-softmax of an arbitrary logit vector.
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

/// log pi(response[t] | query, response[<t]) for every t.
std::vector<double> sequence_log_probs(const PolicyParams& params, std::span<const Token> query,
                                       std::span<const Token> response);

/// Samples until eos_id is emitted (eos is kept as the final token) or
/// max_len tokens are produced. Reward and advantage are left at zero.
Trajectory sample_sequence(const PolicyParams& params, const TokenSeq& query, int max_len, Rng& rng);

LogitGradient logit_gradient(std::span<const double> probs, Token sampled_token, double advantage);

/// Gradient of sum_k coef_k * log pi(token_k | context_k) with respect to the weights.
ParamGradient accumulate_param_gradient(const PolicyParams& params, std::span<const WeightedTerm> terms);

/// Adds coef * d log pi(token | history) / d weights into `grad`, given the
/// already-computed distribution for that history.
void add_log_prob_gradient(const PolicyParams& params, std::span<const std::size_t> active,
                           std::span<const double> probs, Token token, double coefficient,
                           std::span<double> grad);

}  // namespace sapo
