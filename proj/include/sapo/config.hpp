#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "sapo/diagnostics.hpp"
#include "sapo/gradcheck.hpp"
#include "sapo/trainer.hpp"

namespace sapo {

/// Config-file problem; the message carries file:line:column when known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DiagnosticsOptions {
  double bin_width = kDefaultHistogramBinWidth;
  double ratio_radius = 0.1;
  double min_fraction_within = 0.9;
};

struct StabilityOptions {
  std::vector<double> tau_neg = {1.05, 1.0, 0.95};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

/// Everything one CLI invocation needs. `train.gate` holds the SAPO
/// temperatures and the selected algorithm; the clip widths of the two
/// clipped baselines are kept separately so comparisons can switch algorithm.
struct RunConfig {
  TrainConfig train;
  double grpo_epsilon = kDefaultGrpoEpsilon;
  double gspo_epsilon = kDefaultGspoEpsilon;
  DiagnosticsOptions diagnostics;
  GradcheckOptions gradcheck;
  StabilityOptions stability;
  std::string output_dir;

  /// train.gate switched to `algorithm`, with that algorithm's epsilon.
  GateConfig gate_for(Algorithm algorithm) const;
};

/// Parses and validates a YAML run config. Unknown keys, wrong types and
/// out-of-range values raise ConfigError with a file:line:column prefix.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::string& source_name = "<config>");

nlohmann::json to_json(const RunConfig& config);

}  // namespace sapo
