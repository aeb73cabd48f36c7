// Command-line front end: train, compare, sweep-tau, validate-assumptions, gradcheck.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sapo/config.hpp"
#include "sapo/diagnostics.hpp"
#include "sapo/errors.hpp"
#include "sapo/format.hpp"
#include "sapo/gradcheck.hpp"
#include "sapo/io.hpp"
#include "sapo/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sapo;

namespace {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2, kCheckFailed = 3 };

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool out_required) {
  cmd->add_option("--config", opts.config_path, "Run config (YAML)")->required()->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", opts.out_dir, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", opts.seed, "Override the config seed");
  cmd->add_flag("--quiet", opts.quiet, "Suppress progress output");
}

RunConfig load(const CommonOptions& opts) {
  RunConfig cfg = load_run_config(opts.config_path);
  if (opts.seed) {
    cfg.train.seed = *opts.seed;
    cfg.gradcheck.seed = *opts.seed;
  }
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  if (cfg.output_dir.empty()) throw ConfigError("no output directory: pass --out or set output_dir");
  return cfg;
}

json manifest(const std::string& command, const RunConfig& cfg, const std::vector<std::string>& outputs) {
  return {{"schema_version", kManifestSchemaVersion},
          {"metrics_schema_version", kMetricsSchemaVersion},
          {"command", command},
          {"code_version", code_version()},
          {"seed", cfg.train.seed},
          {"config", to_json(cfg)},
          {"outputs", outputs}};
}

std::string metrics_text(const TrainResult& r) {
  std::ostringstream os;
  write_metrics_csv(os, r.metrics);
  return os.str();
}

std::string optional_int(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); }

double final_pass_rate(const TrainResult& r) {
  for (auto it = r.metrics.rbegin(); it != r.metrics.rend(); ++it) {
    if (it->eval_pass_rate) return *it->eval_pass_rate;
  }
  return r.initial_pass_rate.value_or(0.0);
}

void report(const CommonOptions& opts, const std::string& line) {
  if (!opts.quiet) std::cout << line << '\n';
}

std::string summarize(const std::string& label, const TrainResult& r) {
  std::ostringstream os;
  os << label << ": " << r.metrics.size() << " batches, final pass-rate " << format_double(final_pass_rate(r));
  if (r.divergence_batch) os << ", diverged at batch " << *r.divergence_batch;
  return os.str();
}

int cmd_train(const CommonOptions& opts) {
  const RunConfig cfg = load(opts);
  const fs::path out = cfg.output_dir;
  const TrainResult result = train(cfg.train);
  write_text_file(out / "metrics.csv", metrics_text(result));
  save_checkpoint(out / "final_params.json", result.final_params);
  write_text_file(out / "manifest.json",
                  manifest("train", cfg, {"metrics.csv", "final_params.json"}).dump(2) + "\n");
  report(opts, summarize(std::string(to_string(cfg.train.gate.algorithm)), result));
  return kOk;
}

int cmd_compare(const CommonOptions& opts, const std::vector<std::string>& names) {
  std::vector<Algorithm> algorithms;
  for (const auto& n : names) algorithms.push_back(parse_algorithm(n));
  if (algorithms.size() < 2) throw CLI::ValidationError("--algorithms", "compare needs at least two algorithms");
  const RunConfig cfg = load(opts);
  const fs::path out = cfg.output_dir;

  std::ostringstream joined;
  joined << "algorithm,divergence_batch," << metrics_csv_header() << '\n';
  std::ostringstream summary;
  summary << "algorithm,epsilon,divergence_batch,final_pass_rate\n";
  std::vector<std::string> outputs{"comparison.csv", "summary.csv"};
  for (Algorithm a : algorithms) {
    TrainConfig tc = cfg.train;
    tc.gate = cfg.gate_for(a);
    const TrainResult r = train(tc);
    const std::string name(to_string(a));
    write_text_file(out / name / "metrics.csv", metrics_text(r));
    outputs.push_back(name + "/metrics.csv");
    for (const auto& m : r.metrics) {
      joined << name << ',' << optional_int(r.divergence_batch) << ',' << metrics_csv_row(m) << '\n';
    }
    summary << name << ',' << format_double(tc.gate.epsilon) << ',' << optional_int(r.divergence_batch) << ','
            << format_double(final_pass_rate(r)) << '\n';
    report(opts, summarize(name, r));
  }
  write_text_file(out / "comparison.csv", joined.str());
  write_text_file(out / "summary.csv", summary.str());
  write_text_file(out / "manifest.json", manifest("compare", cfg, outputs).dump(2) + "\n");
  return kOk;
}

int cmd_sweep_tau(const CommonOptions& opts, std::vector<double> tau_neg, std::vector<std::uint64_t> seeds) {
  RunConfig cfg = load(opts);
  if (!tau_neg.empty()) cfg.stability.tau_neg = tau_neg;
  if (!seeds.empty()) cfg.stability.seeds = seeds;
  for (double t : cfg.stability.tau_neg) {
    if (!(t > 0.0)) throw ConfigError("--tau-neg entries must be positive");
  }
  const fs::path out = cfg.output_dir;

  std::vector<GateConfig> variants;
  for (double t : cfg.stability.tau_neg) variants.push_back(GateConfig::sapo(cfg.train.gate.tau_pos, t));

  std::ostringstream runs;
  runs << "seed,tau_pos,tau_neg,batches_run,divergence_batch,final_pass_rate\n";
  std::vector<int> diverged(variants.size(), 0);
  std::vector<double> pass_sum(variants.size(), 0.0);
  std::vector<std::string> outputs{"runs.csv", "summary.csv"};
  for (std::uint64_t seed : cfg.stability.seeds) {
    TrainConfig base = cfg.train;
    base.seed = seed;
    const auto outcomes = stability_experiment(base, variants);
    for (std::size_t v = 0; v < outcomes.size(); ++v) {
      const auto& o = outcomes[v];
      const std::string file = "runs/seed" + std::to_string(seed) + "_tauneg" + format_double(o.gate.tau_neg) + ".csv";
      write_text_file(out / file, metrics_text(o.result));
      outputs.push_back(file);
      runs << seed << ',' << format_double(o.gate.tau_pos) << ',' << format_double(o.gate.tau_neg) << ','
           << o.result.metrics.size() << ',' << optional_int(o.result.divergence_batch) << ','
           << format_double(o.final_pass_rate) << '\n';
      if (o.result.divergence_batch) ++diverged[v];
      pass_sum[v] += o.final_pass_rate;
      report(opts, summarize("seed " + std::to_string(seed) + " tau_neg " + format_double(o.gate.tau_neg), o.result));
    }
  }
  std::ostringstream summary;
  summary << "tau_pos,tau_neg,runs,diverged,divergence_frequency,mean_final_pass_rate\n";
  const double n = static_cast<double>(cfg.stability.seeds.size());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    summary << format_double(variants[v].tau_pos) << ',' << format_double(variants[v].tau_neg) << ','
            << cfg.stability.seeds.size() << ',' << diverged[v] << ',' << format_double(diverged[v] / n) << ','
            << format_double(pass_sum[v] / n) << '\n';
  }
  write_text_file(out / "runs.csv", runs.str());
  write_text_file(out / "summary.csv", summary.str());
  write_text_file(out / "manifest.json", manifest("sweep-tau", cfg, outputs).dump(2) + "\n");
  if (!opts.quiet) std::cout << summary.str();
  return kOk;
}

int cmd_validate_assumptions(const CommonOptions& opts) {
  const RunConfig cfg = load(opts);
  const fs::path out = cfg.output_dir;
  const auto& dopt = cfg.diagnostics;

  std::ostringstream csv;
  write_diagnostics_csv_header(csv);
  std::vector<double> off_policy_ratios;
  std::vector<double> all_ratios;
  std::size_t rows = 0;
  std::size_t violations = 0;
  std::optional<double> worst_step_fraction;
  const bool has_off_policy = cfg.train.minibatches > 1;

  const auto result = train(cfg.train, [&](const StepView& view) {
    const auto diag = sequence_diagnostics(view.sequences, view.params, view.gate);
    for (std::size_t i = 0; i < diag.size(); ++i) {
      if (diag[i].d > diag[i].bound + 1e-12) ++violations;
      write_diagnostics_csv_row(csv, static_cast<std::size_t>(view.batch), static_cast<std::size_t>(view.minibatch),
                                i, diag[i]);
      ++rows;
    }
    std::vector<double> step_ratios;
    for (const auto& entry : view.sequences) {
      const auto r = compute_ratios(view.params, *entry.trajectory);
      step_ratios.insert(step_ratios.end(), r.ratios.begin(), r.ratios.end());
    }
    all_ratios.insert(all_ratios.end(), step_ratios.begin(), step_ratios.end());
    if (view.minibatch > 0 || !has_off_policy) {
      off_policy_ratios.insert(off_policy_ratios.end(), step_ratios.begin(), step_ratios.end());
      const double f = fraction_within(step_ratios, dopt.ratio_radius);
      worst_step_fraction = worst_step_fraction ? std::min(*worst_step_fraction, f) : f;
    }
  });

  json histogram = off_policy_ratios.empty()
                       ? json{{"schema_version", kHistogramSchemaVersion},
                              {"bin_width", dopt.bin_width},
                              {"edges", json::array()},
                              {"counts", json::array()},
                              {"total", 0}}
                       : histogram_to_json(ratio_histogram(off_policy_ratios, dopt.bin_width));
  histogram["scope"] = has_off_policy ? "off-policy mini-batches" : "all mini-batches";

  const double overall = fraction_within(off_policy_ratios, dopt.ratio_radius);
  const bool concentrated = !worst_step_fraction || *worst_step_fraction >= dopt.min_fraction_within;
  json summary = {{"sequences", rows},
                  {"bound_violations", violations},
                  {"ratio_radius", dopt.ratio_radius},
                  {"min_fraction_within", dopt.min_fraction_within},
                  {"fraction_within", overall},
                  {"worst_step_fraction_within", worst_step_fraction ? json(*worst_step_fraction) : json(nullptr)},
                  {"concentration_threshold_met", concentrated},
                  {"diverged", result.divergence_batch.has_value()}};

  write_text_file(out / "diagnostics.csv", csv.str());
  write_text_file(out / "histogram.json", histogram.dump(2) + "\n");
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  auto m = manifest("validate-assumptions", cfg, {"diagnostics.csv", "histogram.json", "summary.json"});
  m["thresholds"] = {{"ratio_radius", dopt.ratio_radius}, {"min_fraction_within", dopt.min_fraction_within}};
  write_text_file(out / "manifest.json", m.dump(2) + "\n");

  std::ostringstream line;
  line << rows << " sequences, " << violations << " bound violations, fraction |r-1|<="
       << format_double(dopt.ratio_radius) << ": " << format_double(overall) << " (worst step "
       << (worst_step_fraction ? format_double(*worst_step_fraction) : std::string("n/a")) << ")";
  report(opts, line.str());
  return violations == 0 ? kOk : kCheckFailed;
}

int cmd_gradcheck(const CommonOptions& opts) {
  RunConfig cfg = load_run_config(opts.config_path);
  if (opts.seed) cfg.gradcheck.seed = *opts.seed;
  std::vector<GateConfig> gates;
  for (Algorithm a : {Algorithm::SAPO, Algorithm::GRPO, Algorithm::GSPO}) gates.push_back(cfg.gate_for(a));
  const auto summaries = run_gradcheck(cfg.gradcheck, gates);
  bool ok = true;
  json doc = json::array();
  for (const auto& s : summaries) {
    const bool pass = s.max_relative_error <= cfg.gradcheck.tolerance;
    ok = ok && pass;
    std::cout << to_string(s.algorithm) << ": max relative error " << format_double(s.max_relative_error) << " over "
              << s.checked << " batches (" << s.skipped << " skipped near a clip edge) "
              << (pass ? "ok" : "FAIL") << '\n';
    doc.push_back({{"algorithm", std::string(to_string(s.algorithm))},
                   {"max_relative_error", s.max_relative_error},
                   {"checked", s.checked},
                   {"skipped", s.skipped},
                   {"tolerance", cfg.gradcheck.tolerance},
                   {"pass", pass}});
  }
  const std::string out_dir = opts.out_dir.empty() ? cfg.output_dir : opts.out_dir;
  if (!out_dir.empty()) {
    write_text_file(fs::path(out_dir) / "gradcheck.json", doc.dump(2) + "\n");
    write_text_file(fs::path(out_dir) / "manifest.json", manifest("gradcheck", cfg, {"gradcheck.json"}).dump(2) + "\n");
  }
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated policy-gradient toolkit: SAPO soft gates with GRPO/GSPO baselines"};
  app.require_subcommand(1);

  CommonOptions train_opts, compare_opts, sweep_opts, validate_opts, grad_opts;
  auto* train_cmd = app.add_subcommand("train", "Train one policy and write metrics");
  add_common(train_cmd, train_opts, false);

  std::vector<std::string> algorithms{"SAPO", "GRPO", "GSPO"};
  auto* compare_cmd = app.add_subcommand("compare", "Train once per algorithm on a shared schedule");
  add_common(compare_cmd, compare_opts, false);
  compare_cmd->add_option("--algorithms", algorithms, "Algorithms to compare")->delimiter(',');

  std::vector<double> tau_neg;
  std::vector<std::uint64_t> seeds;
  auto* sweep_cmd = app.add_subcommand("sweep-tau", "Sweep SAPO tau_neg over several seeds");
  add_common(sweep_cmd, sweep_opts, false);
  sweep_cmd->add_option("--tau-neg", tau_neg, "tau_neg values (overrides config)")->delimiter(',');
  sweep_cmd->add_option("--seeds", seeds, "Seeds (overrides config)")->delimiter(',');

  auto* validate_cmd =
      app.add_subcommand("validate-assumptions", "Dump ratio histograms and per-sequence dispersion diagnostics");
  add_common(validate_cmd, validate_opts, false);

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  add_common(grad_cmd, grad_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsageError;
  }

  try {
    if (*train_cmd) return cmd_train(train_opts);
    if (*compare_cmd) return cmd_compare(compare_opts, algorithms);
    if (*sweep_cmd) return cmd_sweep_tau(sweep_opts, tau_neg, seeds);
    if (*validate_cmd) return cmd_validate_assumptions(validate_opts);
    if (*grad_cmd) return cmd_gradcheck(grad_opts);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
