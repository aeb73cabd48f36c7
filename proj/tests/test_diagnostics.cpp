#include <cmath>
#include <sstream>

#include "doctest.h"
#include "sapo/diagnostics.hpp"
#include "sapo/errors.hpp"
#include "support.hpp"

using namespace sapo;
using namespace sapo::testing;

TEST_CASE("sequence_dispersion: mean and population variance of log ratios") {
  auto d = sequence_dispersion(std::vector<double>{0.3, 0.3, 0.3});
  CHECK(d.mu == doctest::Approx(0.3));
  CHECK(d.var == doctest::Approx(0.0).epsilon(1e-18));
  d = sequence_dispersion(std::vector<double>{0.1, -0.1});
  CHECK(d.mu == 0.0);
  CHECK(d.var == doctest::Approx(0.01).epsilon(1e-14));
  const auto shifted = sequence_dispersion(std::vector<double>{5.1, 4.9});
  CHECK(shifted.var == doctest::Approx(0.01).epsilon(1e-10));
  CHECK_THROWS_AS(sequence_dispersion(std::vector<double>{}), InputError);
}

TEST_CASE("gate_concentration_gap: worked examples") {
  auto g = gate_concentration_gap(std::vector<double>{0.2, 0.2, 0.2, 0.2}, 1.0);
  CHECK(g.d == doctest::Approx(0.0).epsilon(1e-16));
  CHECK(g.bound == doctest::Approx(0.0).epsilon(1e-16));
  g = gate_concentration_gap(std::vector<double>{0.1, -0.1}, 1.0);
  // mpmath: |sech^2(0.05) - 1| = 0.0024958392284321287139...
  CHECK(std::abs(g.d - 0.0024958392284321287) < 1e-15);
  CHECK(std::abs(g.bound - 0.0025) < 1e-18);
  CHECK(g.d <= g.bound);
}

TEST_CASE("property: concentration gap never exceeds tau^2/4 Var and is permutation invariant") {
  Rng rng(123);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> z(2 + rng.below(63));
    const double centre = rng.uniform() - 0.5;
    const double spread = std::pow(10.0, -4 + 4 * rng.uniform());
    for (double& x : z) {
      x = centre + spread * (2 * rng.uniform() - 1);
      if (rng.uniform() < 0.05) x += (rng.uniform() < 0.5 ? -1 : 1) * 5 * rng.uniform();
    }
    const double tau = 0.2 + 3 * rng.uniform();
    const auto g = gate_concentration_gap(z, tau);
    REQUIRE(g.d <= g.bound + 1e-12);
    for (std::size_t i = z.size(); i > 1; --i) std::swap(z[i - 1], z[rng.below(i)]);
    REQUIRE(std::abs(gate_concentration_gap(z, tau).d - g.d) < 1e-14);
  }
}

TEST_CASE("ratio_histogram: on-policy mass sits in the bin containing 1") {
  const std::vector<double> ones(50, 1.0);
  const auto h = ratio_histogram(ones, 0.005);
  REQUIRE(h.counts.size() == 1);
  CHECK(h.counts[0] == 50);
  CHECK(h.edges[0] < 1.0);
  CHECK(h.edges[1] > 1.0);
  CHECK(h.bin_of(1.0) == 0);
}

TEST_CASE("ratio_histogram: counts are conserved and edges are deterministic") {
  Rng rng(5);
  std::vector<double> r(1000);
  for (double& x : r) x = 0.8 + 0.4 * rng.uniform();
  const auto h = ratio_histogram(r, 0.01);
  CHECK(h.total() == r.size());
  CHECK(h.edges.size() == h.counts.size() + 1);
  for (double x : r) {
    const auto b = h.bin_of(x);
    REQUIRE(b < h.counts.size());
    REQUIRE(x >= h.edges[b]);
    REQUIRE(x < h.edges[b + 1]);
  }
  CHECK(h.edges == ratio_histogram(r, 0.01).edges);
  CHECK_THROWS_AS(ratio_histogram(r, 0.0), InputError);
}

TEST_CASE("fraction_within counts |r - 1| <= radius") {
  CHECK(fraction_within(std::vector<double>{1.0, 1.05, 1.2, 0.85}, 0.1) == 0.5);
  CHECK(fraction_within(std::vector<double>{}, 0.1) == 0.0);
}

TEST_CASE("reduction_residual: exact on-policy") {
  const auto p = random_params(6, 2, 1.0, 2);
  Rng rng(3);
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 5; ++i) {
    trajs.push_back(sample_sequence(p, {1}, 8, rng));
    trajs.back().advantage = i % 2 ? 1.0 : -0.7;
  }
  std::vector<const Trajectory*> ptrs;
  for (const auto& t : trajs) ptrs.push_back(&t);
  for (double res : reduction_residual(uniform_batch(ptrs), p, GateConfig::sapo())) CHECK(res < 1e-9);
  CHECK_THROWS_AS(reduction_residual(uniform_batch(ptrs), p, GateConfig::grpo()), InputError);
}

TEST_CASE("reduction_residual: an outlier token breaks the sequence-level reduction") {
  const auto p = random_params(6, 2, 1.0, 4);
  auto smooth = make_trajectory(p, {1}, {2, 3, 4, 5, 1, 2}, 1.0);
  for (double& lp : smooth.behavior_logprobs) lp -= 0.003;  // every z = 0.003
  auto outlier = smooth;
  outlier.behavior_logprobs[2] -= 1.0;  // z = 1.003 at one token
  const std::vector<const Trajectory*> ptrs{&smooth, &outlier};
  const auto res = reduction_residual(uniform_batch(ptrs), p, GateConfig::sapo());
  CHECK(res[0] < 0.01);
  CHECK(res[1] > 10 * res[0]);
}

TEST_CASE("sequence_diagnostics and CSV rows") {
  const auto p = random_params(6, 2, 1.0, 6);
  auto traj = make_trajectory(p, {1}, {2, 3}, -1.0);
  traj.behavior_logprobs[0] -= 0.1;
  traj.behavior_logprobs[1] += 0.1;
  const std::vector<const Trajectory*> ptrs{&traj};
  const auto rows = sequence_diagnostics(uniform_batch(ptrs), p, GateConfig::sapo(1.0, 1.05));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].tau == 1.05);
  CHECK(rows[0].mu == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(rows[0].var == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(rows[0].d <= rows[0].bound);
  CHECK(rows[0].max_abs_ratio_dev == doctest::Approx(std::exp(0.1) - 1).epsilon(1e-12));

  std::ostringstream os;
  write_diagnostics_csv_header(os);
  write_diagnostics_csv_row(os, 3, 1, 0, rows[0]);
  const auto text = os.str();
  CHECK(text.rfind("batch,minibatch,sequence,length,advantage,tau,mu,var,d,bound,max_abs_ratio_dev\n3,1,0,2,-1,1.05,",
                   0) == 0);
}
