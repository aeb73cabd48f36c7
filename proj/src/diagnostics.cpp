#include "sapo/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "sapo/errors.hpp"
#include "sapo/format.hpp"
#include "sapo/grouping.hpp"

namespace sapo {

Dispersion sequence_dispersion(std::span<const double> log_ratios) {
  if (log_ratios.empty()) throw InputError("sequence_dispersion: empty log-ratio list");
  const double n = static_cast<double>(log_ratios.size());
  double mu = 0.0;
  for (double z : log_ratios) mu += z;
  mu /= n;
  double var = 0.0;
  for (double z : log_ratios) var += (z - mu) * (z - mu);
  return {mu, var / n};
}

ConcentrationGap gate_concentration_gap(std::span<const double> log_ratios, double tau) {
  const auto [mu, var] = sequence_dispersion(log_ratios);
  double mean_gate = 0.0;
  for (double z : log_ratios) mean_gate += seq_soft_gate(z, tau);
  mean_gate /= static_cast<double>(log_ratios.size());
  return {std::abs(mean_gate - seq_soft_gate(mu, tau)), 0.25 * tau * tau * var};
}

std::size_t Histogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::size_t Histogram::bin_of(double x) const {
  if (edges.size() < 2 || x < edges.front() || x >= edges.back()) return counts.size();
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

namespace {

// Bin k covers [1 + (k - 1/2) w, 1 + (k + 1/2) w).
long bin_index(double r, double w) { return static_cast<long>(std::floor((r - 1.0) / w + 0.5)); }

}  // namespace

Histogram ratio_histogram(std::span<const double> ratios, double bin_width) {
  if (!(bin_width > 0.0)) throw InputError("ratio_histogram: bin_width must be positive");
  Histogram h;
  h.bin_width = bin_width;
  if (ratios.empty()) return h;
  long lo = bin_index(ratios.front(), bin_width);
  long hi = lo;
  for (double r : ratios) {
    if (!std::isfinite(r)) throw InputError("ratio_histogram: non-finite ratio");
    const long k = bin_index(r, bin_width);
    lo = std::min(lo, k);
    hi = std::max(hi, k);
  }
  const std::size_t bins = static_cast<std::size_t>(hi - lo + 1);
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  for (std::size_t j = 0; j <= bins; ++j) {
    h.edges[j] = 1.0 + (static_cast<double>(lo + static_cast<long>(j)) - 0.5) * bin_width;
  }
  for (double r : ratios) ++h.counts[static_cast<std::size_t>(bin_index(r, bin_width) - lo)];
  return h;
}

Histogram ratio_histogram(const SequenceBatch& batch, const PolicyParams& current, double bin_width) {
  std::vector<double> all;
  for (const auto& entry : batch) {
    const auto ratios = compute_ratios(current, *entry.trajectory);
    all.insert(all.end(), ratios.ratios.begin(), ratios.ratios.end());
  }
  if (all.empty()) throw InputError("ratio_histogram: batch contains no tokens");
  return ratio_histogram(all, bin_width);
}

double fraction_within(std::span<const double> ratios, double radius) {
  if (ratios.empty()) return 0.0;
  std::size_t inside = 0;
  for (double r : ratios) {
    if (std::abs(r - 1.0) <= radius) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(ratios.size());
}

std::vector<DiagnosticsRecord> sequence_diagnostics(const SequenceBatch& batch, const PolicyParams& current,
                                                    const GateConfig& config) {
  std::vector<DiagnosticsRecord> rows;
  rows.reserve(batch.size());
  for (const auto& entry : batch) {
    const Trajectory& traj = *entry.trajectory;
    const auto ratios = compute_ratios(current, traj);
    DiagnosticsRecord row;
    row.length = traj.response.size();
    row.advantage = traj.advantage;
    row.tau = select_tau(config, traj.advantage);
    const auto disp = sequence_dispersion(ratios.log_ratios);
    row.mu = disp.mu;
    row.var = disp.var;
    const auto gap = gate_concentration_gap(ratios.log_ratios, row.tau);
    row.d = gap.d;
    row.bound = gap.bound;
    for (double r : ratios.ratios) row.max_abs_ratio_dev = std::max(row.max_abs_ratio_dev, std::abs(r - 1.0));
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> reduction_residual(const SequenceBatch& batch, const PolicyParams& current,
                                       const GateConfig& config) {
  if (config.algorithm != Algorithm::SAPO) {
    throw InputError("reduction_residual: requires a SAPO gate configuration");
  }
  std::vector<double> out;
  out.reserve(batch.size());
  std::vector<double> token_form(current.size());
  std::vector<double> seq_form(current.size());
  for (const auto& entry : batch) {
    const Trajectory& traj = *entry.trajectory;
    std::fill(token_form.begin(), token_form.end(), 0.0);
    std::fill(seq_form.begin(), seq_form.end(), 0.0);
    const auto ratios = compute_ratios(current, traj);
    const double tau = select_tau(config, traj.advantage);
    const double seq_gate = seq_soft_gate(sequence_dispersion(ratios.log_ratios).mu, tau);
    const double scale = traj.advantage / static_cast<double>(traj.response.size());
    TokenSeq history = traj.query;
    for (std::size_t t = 0; t < traj.response.size(); ++t) {
      const auto active = current.active_features(history);
      const auto probs = token_distribution(current, history);
      const double w = sapo_gate(ratios.ratios[t], tau).weight;
      add_log_prob_gradient(current, active, probs, traj.response[t], w * ratios.ratios[t] * scale, token_form);
      add_log_prob_gradient(current, active, probs, traj.response[t], seq_gate * scale, seq_form);
      history.push_back(traj.response[t]);
    }
    double diff2 = 0.0;
    double norm2 = 0.0;
    for (std::size_t k = 0; k < token_form.size(); ++k) {
      const double d = token_form[k] - seq_form[k];
      diff2 += d * d;
      norm2 += token_form[k] * token_form[k];
    }
    out.push_back(norm2 > 0.0 ? std::sqrt(diff2 / norm2) : 0.0);
  }
  return out;
}

void write_diagnostics_csv_header(std::ostream& out) {
  out << "batch,minibatch,sequence,length,advantage,tau,mu,var,d,bound,max_abs_ratio_dev\n";
}

void write_diagnostics_csv_row(std::ostream& out, std::size_t batch_index, std::size_t minibatch,
                               std::size_t sequence, const DiagnosticsRecord& row) {
  out << batch_index << ',' << minibatch << ',' << sequence << ',' << row.length << ','
      << format_double(row.advantage) << ',' << format_double(row.tau) << ',' << format_double(row.mu) << ','
      << format_double(row.var) << ',' << format_double(row.d) << ',' << format_double(row.bound) << ','
      << format_double(row.max_abs_ratio_dev) << '\n';
}

}  // namespace sapo
