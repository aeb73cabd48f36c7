#include "sapo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "sapo/errors.hpp"

namespace sapo {
namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& message) const {
    std::ostringstream os;
    os << source_;
    const auto mark = node.Mark();
    if (!mark.is_null()) os << ':' << mark.line + 1 << ':' << mark.column + 1;
    os << ": " << message;
    throw ConfigError(os.str());
  }

  void require_map(const YAML::Node& node, const std::string& where) const {
    if (!node.IsMap()) fail(node, "'" + where + "' must be a mapping");
  }

  void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed) const {
    require_map(node, where);
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(kv.first, "unknown key '" + key + "' in " + where + " (allowed: " + list + ")");
      }
    }
  }

  template <typename T>
  void read(const YAML::Node& parent, const char* key, T& out, const std::string& where) const {
    const YAML::Node node = parent[key];
    if (!node) return;
    if (!node.IsScalar()) fail(node, where + "." + key + " must be a scalar");
    try {
      out = node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, where + "." + key + ": cannot parse '" + node.Scalar() + "'");
    }
  }

  template <typename T>
  void read_list(const YAML::Node& parent, const char* key, std::vector<T>& out, const std::string& where) const {
    const YAML::Node node = parent[key];
    if (!node) return;
    if (!node.IsSequence()) fail(node, where + "." + key + " must be a list");
    out.clear();
    for (const auto& item : node) {
      try {
        out.push_back(item.as<T>());
      } catch (const YAML::Exception&) {
        fail(item, where + "." + key + ": cannot parse list element");
      }
    }
  }

  void read_token_lists(const YAML::Node& parent, const char* key, std::vector<TokenSeq>& out,
                        const std::string& where) const {
    const YAML::Node node = parent[key];
    if (!node) return;
    if (!node.IsSequence()) fail(node, where + "." + key + " must be a list of token lists");
    out.clear();
    for (const auto& item : node) {
      if (!item.IsSequence()) fail(item, where + "." + key + " entries must be token lists");
      TokenSeq q;
      for (const auto& tok : item) {
        try {
          q.push_back(tok.as<Token>());
        } catch (const YAML::Exception&) {
          fail(tok, where + "." + key + ": token must be an integer");
        }
      }
      out.push_back(std::move(q));
    }
  }

  // Runs a validation step, attributing any InputError to `node`.
  template <typename F>
  void validate(const YAML::Node& node, F&& step) const {
    try {
      step();
    } catch (const InputError& e) {
      fail(node, e.what());
    }
  }

 private:
  std::string source_;
};

RunConfig parse_root(const YAML::Node& root, const Reader& in) {
  RunConfig cfg;
  if (!root || root.IsNull()) in.fail(root, "config is empty");
  in.check_keys(root, "config",
                {"seed", "output_dir", "task", "policy", "gate", "train", "optimizer", "diagnostics", "gradcheck",
                 "stability"});
  TrainConfig& tc = cfg.train;
  in.read(root, "seed", tc.seed, "config");
  in.read(root, "output_dir", cfg.output_dir, "config");

  // task
  if (const auto node = root["task"]) {
    in.check_keys(node, "task", {"kind", "vocab_size", "eos_id", "keyword", "queries", "modulus"});
    std::string kind = "keyword";
    in.read(node, "kind", kind, "task");
    in.validate(node["kind"] ? node["kind"] : node, [&] { tc.task.kind = parse_task_kind(kind); });
    in.read(node, "vocab_size", tc.task.vocab.size, "task");
    in.read(node, "eos_id", tc.task.vocab.eos_id, "task");
    if (tc.task.kind == TaskKind::Keyword) {
      if (node["modulus"]) in.fail(node["modulus"], "task.modulus only applies to kind: modsum");
      tc.task.keyword = {3, 7};
      tc.task.query_pool = {{1}, {2}, {4}, {5}};
      in.read_list(node, "keyword", tc.task.keyword, "task");
      in.read_token_lists(node, "queries", tc.task.query_pool, "task");
    } else {
      if (node["keyword"]) in.fail(node["keyword"], "task.keyword only applies to kind: keyword");
      tc.task.modulus = 10;
      in.read(node, "modulus", tc.task.modulus, "task");
      if (node["queries"]) {
        in.read_token_lists(node, "queries", tc.task.query_pool, "task");
      } else {
        in.validate(node, [&] { tc.task = TaskSpec::modsum_task(tc.task.vocab, tc.task.modulus); });
      }
    }
    in.validate(node, [&] { tc.task.validate(); });
  } else {
    tc.task = TaskSpec::keyword_task(Vocabulary{16, 0}, {3, 7}, {{1}, {2}, {4}, {5}});
  }

  if (const auto node = root["policy"]) {
    in.check_keys(node, "policy", {"context_window", "init_scale"});
    in.read(node, "context_window", tc.policy.context_window, "policy");
    in.read(node, "init_scale", tc.policy.init_scale, "policy");
    in.validate(node, [&] { PolicyParams probe(tc.task.vocab, tc.policy.context_window); });
  }

  if (const auto node = root["gate"]) {
    in.check_keys(node, "gate", {"algorithm", "tau_pos", "tau_neg", "grpo_epsilon", "gspo_epsilon"});
    std::string algorithm = "SAPO";
    in.read(node, "algorithm", algorithm, "gate");
    in.validate(node["algorithm"] ? node["algorithm"] : node,
                [&] { tc.gate.algorithm = parse_algorithm(algorithm); });
    in.read(node, "tau_pos", tc.gate.tau_pos, "gate");
    in.read(node, "tau_neg", tc.gate.tau_neg, "gate");
    in.read(node, "grpo_epsilon", cfg.grpo_epsilon, "gate");
    in.read(node, "gspo_epsilon", cfg.gspo_epsilon, "gate");
    in.validate(node, [&] {
      cfg.gate_for(Algorithm::GRPO).validate();
      cfg.gate_for(Algorithm::GSPO).validate();
    });
  }
  tc.gate = cfg.gate_for(tc.gate.algorithm);

  if (const auto node = root["train"]) {
    in.check_keys(node, "train",
                  {"group_size", "queries_per_batch", "minibatches", "total_batches", "max_len", "eval_every",
                   "eval_samples_per_query", "std_floor", "collapse"});
    in.read(node, "group_size", tc.group_size, "train");
    in.read(node, "queries_per_batch", tc.queries_per_batch, "train");
    in.read(node, "minibatches", tc.minibatches, "train");
    in.read(node, "total_batches", tc.total_batches, "train");
    in.read(node, "max_len", tc.max_len, "train");
    in.read(node, "eval_every", tc.eval_every, "train");
    in.read(node, "eval_samples_per_query", tc.eval_samples_per_query, "train");
    in.read(node, "std_floor", tc.std_floor, "train");
    if (const auto c = node["collapse"]) {
      in.check_keys(c, "train.collapse", {"window", "fraction", "patience"});
      in.read(c, "window", tc.collapse.window, "train.collapse");
      in.read(c, "fraction", tc.collapse.fraction, "train.collapse");
      in.read(c, "patience", tc.collapse.patience, "train.collapse");
    }
  }

  if (const auto node = root["optimizer"]) {
    in.check_keys(node, "optimizer", {"kind", "learning_rate", "beta1", "beta2", "epsilon"});
    std::string kind = "sgd";
    in.read(node, "kind", kind, "optimizer");
    in.validate(node["kind"] ? node["kind"] : node, [&] { tc.optimizer.kind = parse_optimizer_kind(kind); });
    in.read(node, "learning_rate", tc.optimizer.learning_rate, "optimizer");
    in.read(node, "beta1", tc.optimizer.beta1, "optimizer");
    in.read(node, "beta2", tc.optimizer.beta2, "optimizer");
    in.read(node, "epsilon", tc.optimizer.epsilon, "optimizer");
  }

  if (const auto node = root["diagnostics"]) {
    in.check_keys(node, "diagnostics", {"bin_width", "ratio_radius", "min_fraction_within"});
    in.read(node, "bin_width", cfg.diagnostics.bin_width, "diagnostics");
    in.read(node, "ratio_radius", cfg.diagnostics.ratio_radius, "diagnostics");
    in.read(node, "min_fraction_within", cfg.diagnostics.min_fraction_within, "diagnostics");
    if (!(cfg.diagnostics.bin_width > 0.0)) in.fail(node, "diagnostics.bin_width must be positive");
    if (!(cfg.diagnostics.ratio_radius > 0.0)) in.fail(node, "diagnostics.ratio_radius must be positive");
  }

  cfg.gradcheck.seed = tc.seed;
  if (const auto node = root["gradcheck"]) {
    in.check_keys(node, "gradcheck",
                  {"batches", "vocab_size", "context_window", "groups", "group_size", "max_len", "init_scale",
                   "min_perturbation", "max_perturbation", "step", "margin", "tolerance"});
    auto& g = cfg.gradcheck;
    in.read(node, "batches", g.batches, "gradcheck");
    in.read(node, "vocab_size", g.vocab_size, "gradcheck");
    in.read(node, "context_window", g.context_window, "gradcheck");
    in.read(node, "groups", g.groups, "gradcheck");
    in.read(node, "group_size", g.group_size, "gradcheck");
    in.read(node, "max_len", g.max_len, "gradcheck");
    in.read(node, "init_scale", g.init_scale, "gradcheck");
    in.read(node, "min_perturbation", g.min_perturbation, "gradcheck");
    in.read(node, "max_perturbation", g.max_perturbation, "gradcheck");
    in.read(node, "step", g.step, "gradcheck");
    in.read(node, "margin", g.margin, "gradcheck");
    in.read(node, "tolerance", g.tolerance, "gradcheck");
    in.validate(node, [&] {
      g.validate();
      PolicyParams probe(Vocabulary{g.vocab_size, 0}, g.context_window);
    });
  }

  if (const auto node = root["stability"]) {
    in.check_keys(node, "stability", {"tau_neg", "seeds"});
    in.read_list(node, "tau_neg", cfg.stability.tau_neg, "stability");
    in.read_list(node, "seeds", cfg.stability.seeds, "stability");
    if (cfg.stability.tau_neg.empty()) in.fail(node, "stability.tau_neg must be nonempty");
    if (cfg.stability.seeds.empty()) in.fail(node, "stability.seeds must be nonempty");
    for (double t : cfg.stability.tau_neg) {
      if (!(t > 0.0)) in.fail(node["tau_neg"], "stability.tau_neg entries must be positive");
    }
  }

  in.validate(root, [&] { tc.validate(); });
  return cfg;
}

}  // namespace

GateConfig RunConfig::gate_for(Algorithm algorithm) const {
  GateConfig g = train.gate;
  g.algorithm = algorithm;
  if (algorithm == Algorithm::GRPO) g.epsilon = grpo_epsilon;
  if (algorithm == Algorithm::GSPO) g.epsilon = gspo_epsilon;
  if (algorithm == Algorithm::SAPO) g.epsilon = grpo_epsilon;
  return g;
}

RunConfig parse_run_config(const std::string& text, const std::string& source_name) {
  Reader reader(source_name);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source_name << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": " << e.msg;
    throw ConfigError(os.str());
  }
  return parse_root(root, reader);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buffer;
  buffer << file.rdbuf();
  return parse_run_config(buffer.str(), path.string());
}

nlohmann::json to_json(const RunConfig& config) {
  const TrainConfig& tc = config.train;
  nlohmann::json task = {{"kind", std::string(to_string(tc.task.kind))},
                         {"vocab_size", tc.task.vocab.size},
                         {"eos_id", tc.task.vocab.eos_id},
                         {"queries", tc.task.query_pool}};
  if (tc.task.kind == TaskKind::Keyword) {
    task["keyword"] = tc.task.keyword;
  } else {
    task["modulus"] = tc.task.modulus;
  }
  const auto& g = config.gradcheck;
  std::vector<std::uint64_t> seeds = config.stability.seeds;
  return {
      {"seed", tc.seed},
      {"output_dir", config.output_dir},
      {"task", task},
      {"policy", {{"context_window", tc.policy.context_window}, {"init_scale", tc.policy.init_scale}}},
      {"gate",
       {{"algorithm", std::string(to_string(tc.gate.algorithm))},
        {"tau_pos", tc.gate.tau_pos},
        {"tau_neg", tc.gate.tau_neg},
        {"grpo_epsilon", config.grpo_epsilon},
        {"gspo_epsilon", config.gspo_epsilon}}},
      {"train",
       {{"group_size", tc.group_size},
        {"queries_per_batch", tc.queries_per_batch},
        {"minibatches", tc.minibatches},
        {"total_batches", tc.total_batches},
        {"max_len", tc.max_len},
        {"eval_every", tc.eval_every},
        {"eval_samples_per_query", tc.eval_samples_per_query},
        {"std_floor", tc.std_floor},
        {"collapse",
         {{"window", tc.collapse.window}, {"fraction", tc.collapse.fraction}, {"patience", tc.collapse.patience}}}}},
      {"optimizer",
       {{"kind", std::string(to_string(tc.optimizer.kind))},
        {"learning_rate", tc.optimizer.learning_rate},
        {"beta1", tc.optimizer.beta1},
        {"beta2", tc.optimizer.beta2},
        {"epsilon", tc.optimizer.epsilon}}},
      {"diagnostics",
       {{"bin_width", config.diagnostics.bin_width},
        {"ratio_radius", config.diagnostics.ratio_radius},
        {"min_fraction_within", config.diagnostics.min_fraction_within}}},
      {"gradcheck",
       {{"batches", g.batches},
        {"vocab_size", g.vocab_size},
        {"context_window", g.context_window},
        {"groups", g.groups},
        {"group_size", g.group_size},
        {"max_len", g.max_len},
        {"init_scale", g.init_scale},
        {"min_perturbation", g.min_perturbation},
        {"max_perturbation", g.max_perturbation},
        {"step", g.step},
        {"margin", g.margin},
        {"tolerance", g.tolerance},
        {"seed", g.seed}}},
      {"stability", {{"tau_neg", config.stability.tau_neg}, {"seeds", seeds}}},
  };
}

}  // namespace sapo
