#pragma once

#include <string_view>
#include <vector>

#include "sapo/policy.hpp"
#include "sapo/random.hpp"

namespace sapo {

enum class TaskKind { Keyword, ModSum };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

/// Synthetic verifiable-reward task.
///   keyword: reward 1 iff `keyword` occurs contiguously in the response.
///   modsum:  reward 1 iff response[0] == (sum of query tokens) mod `modulus`.
struct TaskSpec {
  TaskKind kind = TaskKind::Keyword;
  Vocabulary vocab;
  std::vector<TokenSeq> query_pool;
  TokenSeq keyword;
  int modulus = 0;

  void validate() const;

  static TaskSpec keyword_task(Vocabulary vocab, TokenSeq pattern, std::vector<TokenSeq> query_pool);
  /// Query pool is every ordered pair (a, b) with a, b in [0, modulus).
  static TaskSpec modsum_task(Vocabulary vocab, int modulus);
};

double reward(const TaskSpec& task, const TokenSeq& query, const TokenSeq& response);

const TokenSeq& sample_query(const TaskSpec& task, Rng& rng);

}  // namespace sapo
