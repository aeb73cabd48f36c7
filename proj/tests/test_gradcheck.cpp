#include <cmath>
#include <vector>

#include "doctest.h"
#include "sapo/errors.hpp"
#include "sapo/gradcheck.hpp"
#include "support.hpp"

using namespace sapo;
using namespace sapo::testing;

TEST_CASE("relative_error is normwise") {
  const std::vector<double> a{1.0, 0.0, -2.0};
  const std::vector<double> b{1.0, 1e-6, -2.0};
  CHECK(relative_error(a, b) == doctest::Approx(5e-7).epsilon(1e-12));
  CHECK(relative_error(a, a) == 0.0);
  const std::vector<double> zeros(3, 0.0);
  CHECK(relative_error(zeros, zeros) == 0.0);
}

TEST_CASE("SAPO at the on-policy point agrees to 1e-9") {
  const auto p = random_params(5, 2, 1.0, 8);
  std::vector<Trajectory> trajs{make_trajectory(p, {1}, {2, 3, 4}, 1.0), make_trajectory(p, {2}, {4, 0}, -1.0)};
  const std::vector<const Trajectory*> ptrs{&trajs[0], &trajs[1]};
  const auto batch = uniform_batch(ptrs);
  const auto gate = GateConfig::sapo();
  CHECK(relative_error(surrogate_gradient(batch, p, gate), finite_difference_gradient(batch, p, gate, 1e-5)) < 1e-9);
}

TEST_CASE("a GRPO ratio inside the margin is flagged for skipping") {
  const auto p = random_params(5, 2, 1.0, 9);
  auto traj = make_trajectory(p, {1}, {2, 3}, 1.0);
  traj.behavior_logprobs[1] -= std::log(1.2 + 5e-4);  // r = 1.2 + 5e-4, inside the 1e-3 margin
  const std::vector<const Trajectory*> ptrs{&traj};
  const auto batch = uniform_batch(ptrs);
  CHECK(near_clip_boundary(batch, p, GateConfig::grpo(), 1e-3));
  CHECK_FALSE(near_clip_boundary(batch, p, GateConfig::grpo(), 1e-4));
  CHECK_FALSE(near_clip_boundary(batch, p, GateConfig::sapo(), 1e-3));
}

TEST_CASE("run_gradcheck reports errors well under 1e-5 and counts skips") {
  GradcheckOptions opts;
  opts.batches = 20;
  opts.seed = 4;
  const std::vector<GateConfig> gates{GateConfig::sapo(), GateConfig::grpo(), GateConfig::gspo()};
  const auto summaries = run_gradcheck(opts, gates);
  REQUIRE(summaries.size() == 3);
  for (const auto& s : summaries) {
    CHECK(s.checked + s.skipped == 20);
    CHECK(s.checked > 0);
    CHECK(s.max_relative_error < 1e-5);
  }
}

TEST_CASE("gradcheck options are validated") {
  GradcheckOptions opts;
  opts.step = 0.0;
  CHECK_THROWS_AS(opts.validate(), InputError);
  opts = {};
  opts.min_perturbation = 1.0;
  opts.max_perturbation = 0.1;
  CHECK_THROWS_AS(opts.validate(), InputError);
}
