#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "sapo/gates.hpp"
#include "sapo/objective.hpp"
#include "sapo/policy.hpp"

namespace sapo {

inline constexpr double kDefaultHistogramBinWidth = 0.005;

struct Dispersion {
  double mu;   // mean log ratio, log s_i
  double var;  // population variance of the log ratios
};

Dispersion sequence_dispersion(std::span<const double> log_ratios);

/// d = |mean_t g(z_t) - g(mu)| and its analytic ceiling tau^2/4 * var.
struct ConcentrationGap {
  double d;
  double bound;
};

ConcentrationGap gate_concentration_gap(std::span<const double> log_ratios, double tau);

/// Fixed-width histogram whose bins are centred on multiples of bin_width
/// away from 1.0, so an exactly on-policy ratio sits mid-bin.
struct Histogram {
  double bin_width = kDefaultHistogramBinWidth;
  std::vector<double> edges;  // counts.size() + 1 entries, ascending
  std::vector<std::size_t> counts;

  std::size_t total() const;
  /// Index of the bin holding x, or counts.size() if x is outside the range.
  std::size_t bin_of(double x) const;
};

Histogram ratio_histogram(std::span<const double> ratios, double bin_width = kDefaultHistogramBinWidth);
Histogram ratio_histogram(const SequenceBatch& batch, const PolicyParams& current,
                          double bin_width = kDefaultHistogramBinWidth);

/// Fraction of ratios with |r - 1| <= radius (0 for an empty list).
double fraction_within(std::span<const double> ratios, double radius);

/// One row of the per-sequence assumption report.
struct DiagnosticsRecord {
  std::size_t length = 0;
  double advantage = 0.0;
  double tau = 0.0;
  double mu = 0.0;
  double var = 0.0;
  double d = 0.0;
  double bound = 0.0;
  double max_abs_ratio_dev = 0.0;  // max_t |r_t - 1|
};

/// Per-sequence dispersion and concentration gap, with tau picked from the
/// sequence's advantage sign via config.tau_pos / config.tau_neg.
std::vector<DiagnosticsRecord> sequence_diagnostics(const SequenceBatch& batch, const PolicyParams& current,
                                                    const GateConfig& config);

/// Per-sequence relative distance between the token-gated SAPO gradient
/// contribution  (1/|y|) sum_t w(r_t) r_t grad log pi_t A
/// and its sequence-gated reduction  g(log s) (1/|y|) sum_t grad log pi_t A,
/// as ||token - sequence|| / ||token||. Zero when the token form vanishes.
std::vector<double> reduction_residual(const SequenceBatch& batch, const PolicyParams& current,
                                       const GateConfig& config);

void write_diagnostics_csv_header(std::ostream& out);
void write_diagnostics_csv_row(std::ostream& out, std::size_t batch_index, std::size_t minibatch,
                               std::size_t sequence, const DiagnosticsRecord& row);

}  // namespace sapo
