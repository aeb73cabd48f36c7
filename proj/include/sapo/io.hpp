#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "json.hpp"

#include "sapo/diagnostics.hpp"
#include "sapo/policy.hpp"
#include "sapo/trainer.hpp"

namespace sapo {

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;
inline constexpr int kHistogramSchemaVersion = 1;

/// Columns: batch, mean_train_reward, eval_pass_rate (blank when not
/// evaluated), grad_norm, mean_ratio, max_ratio, ratio_within_0p1,
/// effective_token_fraction, version_tag, diverged (0/1).
void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> metrics);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& record);

nlohmann::json checkpoint_to_json(const PolicyParams& params);
PolicyParams checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

nlohmann::json histogram_to_json(const Histogram& histogram);

/// Version string compiled into the binaries.
std::string code_version();

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sapo
