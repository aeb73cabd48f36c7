#include "sapo/tasks.hpp"

#include <algorithm>
#include <string>

#include "sapo/errors.hpp"

namespace sapo {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Keyword: return "keyword";
    case TaskKind::ModSum: return "modsum";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "keyword") return TaskKind::Keyword;
  if (name == "modsum") return TaskKind::ModSum;
  throw InputError("unknown task kind '" + std::string(name) + "' (expected keyword or modsum)");
}

void TaskSpec::validate() const {
  vocab.validate();
  if (query_pool.empty()) throw InputError("task query_pool must be nonempty");
  for (const auto& q : query_pool) {
    for (Token t : q) {
      if (!vocab.contains(t)) throw InputError("query token " + std::to_string(t) + " outside vocabulary");
    }
  }
  switch (kind) {
    case TaskKind::Keyword:
      if (keyword.empty()) throw InputError("keyword task needs a nonempty pattern");
      for (Token t : keyword) {
        if (!vocab.contains(t)) throw InputError("keyword token outside vocabulary");
        // eos terminates generation, so a pattern containing it can only match at the very end.
        if (t == vocab.eos_id) throw InputError("keyword pattern must not contain eos_id");
      }
      break;
    case TaskKind::ModSum:
      if (modulus < 2 || modulus > vocab.size) throw InputError("modsum modulus must lie in [2, vocab size]");
      for (const auto& q : query_pool) {
        if (q.empty()) throw InputError("modsum queries must be nonempty");
      }
      break;
  }
}

TaskSpec TaskSpec::keyword_task(Vocabulary vocab, TokenSeq pattern, std::vector<TokenSeq> query_pool) {
  TaskSpec t;
  t.kind = TaskKind::Keyword;
  t.vocab = vocab;
  t.keyword = std::move(pattern);
  t.query_pool = std::move(query_pool);
  t.validate();
  return t;
}

TaskSpec TaskSpec::modsum_task(Vocabulary vocab, int modulus) {
  TaskSpec t;
  t.kind = TaskKind::ModSum;
  t.vocab = vocab;
  t.modulus = modulus;
  for (int a = 0; a < modulus; ++a) {
    for (int b = 0; b < modulus; ++b) t.query_pool.push_back({a, b});
  }
  t.validate();
  return t;
}

double reward(const TaskSpec& task, const TokenSeq& query, const TokenSeq& response) {
  switch (task.kind) {
    case TaskKind::Keyword: {
      const auto it = std::search(response.begin(), response.end(), task.keyword.begin(), task.keyword.end());
      return it != response.end() ? 1.0 : 0.0;
    }
    case TaskKind::ModSum: {
      if (response.empty()) return 0.0;
      long sum = 0;
      for (Token t : query) sum += t;
      return response.front() == static_cast<Token>(sum % task.modulus) ? 1.0 : 0.0;
    }
  }
  return 0.0;
}

const TokenSeq& sample_query(const TaskSpec& task, Rng& rng) {
  if (task.query_pool.empty()) throw InputError("sample_query: empty query pool");
  return task.query_pool[rng.below(task.query_pool.size())];
}

}  // namespace sapo
