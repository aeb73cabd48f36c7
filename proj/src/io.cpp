#include "sapo/io.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "sapo/errors.hpp"
#include "sapo/format.hpp"

#ifndef SAPO_VERSION
#define SAPO_VERSION "0.0.0"
#endif

namespace sapo {

std::string metrics_csv_header() {
  return "batch,mean_train_reward,eval_pass_rate,grad_norm,mean_ratio,max_ratio,ratio_within_0p1,"
         "effective_token_fraction,version_tag,diverged";
}

std::string metrics_csv_row(const MetricsRecord& r) {
  std::ostringstream os;
  os << r.batch << ',' << format_double(r.mean_train_reward) << ','
     << (r.eval_pass_rate ? format_double(*r.eval_pass_rate) : std::string()) << ',' << format_double(r.grad_norm)
     << ',' << format_double(r.mean_ratio) << ',' << format_double(r.max_ratio) << ','
     << format_double(r.ratio_within_0p1) << ',' << format_double(r.effective_token_fraction) << ','
     << r.version_tag << ',' << (r.diverged ? 1 : 0);
  return os.str();
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> metrics) {
  out << metrics_csv_header() << '\n';
  for (const auto& r : metrics) out << metrics_csv_row(r) << '\n';
}

nlohmann::json checkpoint_to_json(const PolicyParams& params) {
  return {{"format", "sapo-policy"},
          {"schema_version", kCheckpointSchemaVersion},
          {"vocab_size", params.vocab().size},
          {"eos_id", params.vocab().eos_id},
          {"context_window", params.context_window()},
          {"feature_dim", params.feature_dim()},
          {"version_tag", params.version_tag()},
          {"weights", std::vector<double>(params.weights().begin(), params.weights().end())}};
}

PolicyParams checkpoint_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format") != "sapo-policy") throw InputError("checkpoint: unexpected format tag");
    if (doc.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw InputError("checkpoint: unsupported schema_version");
    }
    PolicyParams params(Vocabulary{doc.at("vocab_size").get<int>(), doc.at("eos_id").get<Token>()},
                        doc.at("context_window").get<int>());
    const auto weights = doc.at("weights").get<std::vector<double>>();
    if (weights.size() != params.size() || doc.at("feature_dim").get<std::size_t>() != params.feature_dim()) {
      throw InputError("checkpoint: weight count does not match header");
    }
    std::copy(weights.begin(), weights.end(), params.weights().begin());
    params.set_version_tag(doc.at("version_tag").get<std::int64_t>());
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  write_text_file(path, checkpoint_to_json(params).dump() + "\n");
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("checkpoint " + path.string() + ": " + e.what());
  }
}

nlohmann::json histogram_to_json(const Histogram& h) {
  return {{"schema_version", kHistogramSchemaVersion},
          {"bin_width", h.bin_width},
          {"edges", h.edges},
          {"counts", h.counts},
          {"total", h.total()}};
}

std::string code_version() { return SAPO_VERSION; }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace sapo
