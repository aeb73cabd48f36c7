#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "sapo/config.hpp"
#include "sapo/errors.hpp"
#include "sapo/io.hpp"
#include "sapo/random.hpp"
#include "support.hpp"

using namespace sapo;

namespace {

std::string error_of(const std::string& yaml) {
  try {
    parse_run_config(yaml, "run.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("empty config yields the defaults") {
  const RunConfig cfg = parse_run_config("{}");
  CHECK(cfg.train.gate.algorithm == Algorithm::SAPO);
  CHECK(cfg.train.gate.tau_pos == 1.0);
  CHECK(cfg.train.gate.tau_neg == 1.05);
  CHECK(cfg.grpo_epsilon == 0.2);
  CHECK(cfg.gspo_epsilon == 0.003);
  CHECK(cfg.train.task.kind == TaskKind::Keyword);
  CHECK(cfg.train.group_size == 8);
}

TEST_CASE("fields are read into the run config") {
  const RunConfig cfg = parse_run_config(R"(
seed: 42
output_dir: out/x
task:
  kind: modsum
  vocab_size: 12
  modulus: 5
gate:
  algorithm: gspo
  gspo_epsilon: 0.004
train:
  group_size: 4
  minibatches: 2
  collapse: {window: 5, fraction: 0.5, patience: 7}
optimizer:
  kind: adam
  learning_rate: 0.01
)");
  CHECK(cfg.train.seed == 42);
  CHECK(cfg.output_dir == "out/x");
  CHECK(cfg.train.task.kind == TaskKind::ModSum);
  CHECK(cfg.train.task.modulus == 5);
  CHECK(cfg.train.task.query_pool.size() == 25);
  CHECK(cfg.train.gate.algorithm == Algorithm::GSPO);
  CHECK(cfg.gate_for(Algorithm::GSPO).epsilon == 0.004);
  CHECK(cfg.gate_for(Algorithm::GRPO).epsilon == 0.2);
  CHECK(cfg.train.group_size == 4);
  CHECK(cfg.train.collapse.patience == 7);
  CHECK(cfg.train.optimizer.kind == OptimizerKind::Adam);
  CHECK(cfg.gradcheck.seed == 42);
}

TEST_CASE("unknown keys are rejected with their position") {
  const auto msg = error_of("seed: 1\ntrain:\n  group_size: 4\n  learnin_rate: 0.1\n");
  CHECK(msg.find("run.yaml:4:3") == 0);
  CHECK(msg.find("learnin_rate") != std::string::npos);
}

TEST_CASE("syntax errors report a line") {
  const auto msg = error_of("seed: 1\ntask: [1, 2\n");
  REQUIRE_FALSE(msg.empty());
  CHECK(msg.rfind("run.yaml:", 0) == 0);
}

TEST_CASE("type and range errors point at the offending value") {
  CHECK(error_of("train:\n  group_size: many\n").find("run.yaml:2:15") == 0);
  CHECK(error_of("gate:\n  algorithm: ppo\n").find("run.yaml:2") == 0);
  CHECK_FALSE(error_of("train:\n  group_size: 1\n").empty());
  CHECK_FALSE(error_of("gate:\n  tau_neg: -1\n").empty());
  CHECK_FALSE(error_of("gate:\n  grpo_epsilon: 1.5\n").empty());
  CHECK_FALSE(error_of("task:\n  keyword: [0, 3]\n").empty());
}

TEST_CASE("missing file is a config error") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.yaml"), ConfigError);
}

TEST_CASE("property: checkpoints round-trip bit-exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int vocab = 3 + static_cast<int>(rng.below(10));
    const int window = 1 + static_cast<int>(rng.below(3));
    PolicyParams p(Vocabulary{vocab, 0}, window);
    p.randomize(1.0 + 10.0 * rng.uniform(), rng);
    p.weights()[0] = 1e-300;
    p.set_version_tag(rng.below(1000));
    const auto text = checkpoint_to_json(p).dump();
    const PolicyParams q = checkpoint_from_json(nlohmann::json::parse(text));
    CHECK(q.vocab().size == p.vocab().size);
    CHECK(q.context_window() == p.context_window());
    CHECK(q.version_tag() == p.version_tag());
    REQUIRE(q.size() == p.size());
    bool same = true;
    for (std::size_t k = 0; k < p.size(); ++k) same = same && q.weights()[k] == p.weights()[k];
    CHECK(same);
  }
}

TEST_CASE("malformed checkpoints are rejected") {
  PolicyParams p(Vocabulary{4, 0}, 1);
  auto doc = checkpoint_to_json(p);
  auto bad = doc;
  bad["weights"].erase(0);
  CHECK_THROWS_AS(checkpoint_from_json(bad), InputError);
  bad = doc;
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(checkpoint_from_json(bad), InputError);
  bad = doc;
  bad["format"] = "other";
  CHECK_THROWS_AS(checkpoint_from_json(bad), InputError);
}

TEST_CASE("checkpoint files round-trip through disk") {
  const auto dir = std::filesystem::temp_directory_path() / "sapo_test_checkpoint";
  std::filesystem::remove_all(dir);
  Rng rng(5);
  PolicyParams p(Vocabulary{6, 0}, 2);
  p.randomize(2.0, rng);
  save_checkpoint(dir / "nested" / "p.json", p);
  const PolicyParams q = load_checkpoint(dir / "nested" / "p.json");
  CHECK(q.weights()[7] == p.weights()[7]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("metrics rows use full precision and blank optional cells") {
  MetricsRecord r;
  r.batch = 3;
  r.mean_train_reward = 0.1;
  r.grad_norm = 1.0 / 3.0;
  r.version_tag = 12;
  std::ostringstream os;
  const MetricsRecord rows[] = {r};
  write_metrics_csv(os, rows);
  const std::string text = os.str();
  CHECK(text.rfind(metrics_csv_header() + "\n", 0) == 0);
  const std::string row = metrics_csv_row(r);
  CHECK(row.rfind("3,0.10000000000000001,,0.33333333333333331,", 0) == 0);
  CHECK(row.substr(row.size() - 5) == ",12,0");
}

TEST_CASE("config echo survives a round trip") {
  const RunConfig a = parse_run_config("seed: 9\ngate: {tau_neg: 0.95}\n");
  const auto doc = to_json(a);
  CHECK(doc["gate"]["tau_neg"] == 0.95);
  CHECK(doc["seed"] == 9);
}
