#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "cweibull/error.hpp"
#include "cweibull/rng.hpp"
#include "cweibull/simulation.hpp"

using namespace cweibull;

TEST_CASE("random streams") {
  Rng a(7);
  Rng b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(7);
  double lo = 1.0;
  double hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = c.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  // split streams depend only on the parent seed and index
  Rng parent(9);
  parent.uniform();
  CHECK(parent.split(3).uniform() == Rng(9).split(3).uniform());
  CHECK(Rng(9).split(3).uniform() != Rng(9).split(4).uniform());

  Rng g(10);
  const int n = 100000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = g.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::fabs(s / n) < 4.0 / std::sqrt(n));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("built-in scenarios carry the reference settings") {
  const ScenarioSpec one = builtin_scenario(1, 0.0);
  CHECK(one.n == 1000);
  CHECK(one.model.p == 3);
  REQUIRE(one.truth.groups.size() == 3);
  const double sigma[] = {1.0, 1.0, 1.1};
  const double alpha[] = {1.6, 1.2, 2.1};
  const double beta[] = {1.2, 2.0, 1.0};
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(one.truth.groups[l].sigma == sigma[l]);
    CHECK(one.truth.groups[l].alpha == alpha[l]);
    CHECK(one.truth.groups[l].beta == std::vector<double>{beta[l]});
    CHECK(one.model.groups[l].covariate_indices == std::vector<std::size_t>{l});
  }

  const ScenarioSpec two = builtin_scenario(2, 0.1);
  CHECK(two.n == 1500);
  CHECK(two.truth.groups[0].beta[0] == -3.0);
  CHECK(two.model.groups[0].covariate_indices == std::vector<std::size_t>{0, 1, 3});

  const ScenarioSpec three = builtin_scenario(3, 0.3);
  CHECK(three.model.groups[1].covariate_indices == std::vector<std::size_t>{1, 2, 3});
  CHECK(three.truth.groups[1].beta[0] == 0.0);  // CF2 on x2
  CHECK(three.model.groups[2].covariate_indices == std::vector<std::size_t>{3, 4, 5});
  CHECK(three.truth.groups[2].beta[0] == 0.0);  // CF3 on x4

  CHECK_THROWS_AS(builtin_scenario(1, 0.2), SpecError);
  CHECK_THROWS_AS(builtin_scenario(3, 0.0), SpecError);
  CHECK_THROWS_AS(builtin_scenario(4, 0.1), SpecError);
}

TEST_CASE("covariates are standard normal") {
  const SimulatedDataset sim = generate(builtin_scenario(2, 0.0, 5));
  const auto& x = sim.data.covariates;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().sum() / (n - 1.0);
    CHECK(std::fabs(mean) < 4.0 / std::sqrt(n));
    CHECK(var > 0.85);
    CHECK(var < 1.15);
  }
}

TEST_CASE("no censoring keeps the true times") {
  const SimulatedDataset sim = generate(builtin_scenario(1, 0.0, 2));
  CHECK(sim.data.size() == 1000);
  CHECK(sim.realized_censoring_rate == 0.0);
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    CHECK(sim.data.status[i] == 1);
    CHECK(sim.data.times[i] == sim.true_event_times[i]);
  }
  std::set<std::size_t> causes(sim.latent_causes.begin(), sim.latent_causes.end());
  CHECK(causes.size() == 3);
}

TEST_CASE("censoring calibration") {
  const std::vector<double> ones{1.0, 1.0, 1.0, 1.0};
  CHECK(calibrate_censoring_rate(ones, 0.5) == doctest::Approx(std::numbers::ln2).epsilon(1e-10));
  CHECK(calibrate_censoring_rate(ones, 0.0) == 0.0);
  Rng rng(3);
  const CensoringResult none = apply_censoring(ones, 0.0, rng);
  for (int s : none.status) CHECK(s == 1);
  CHECK_THROWS(calibrate_censoring_rate(ones, 1.0));
}

TEST_CASE("realized censoring tracks the target") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SimulatedDataset sim = generate(builtin_scenario(1, 0.1, seed));
    CHECK(sim.realized_censoring_rate >= 0.07);
    CHECK(sim.realized_censoring_rate <= 0.13);
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
      CHECK(sim.data.times[i] <= sim.true_event_times[i]);
    }
  }
  // reference censored counts 161, 289, 443 out of 1500
  const double reference[] = {161.0 / 1500, 289.0 / 1500, 443.0 / 1500};
  const double targets[] = {0.1, 0.2, 0.3};
  for (int k = 0; k < 3; ++k) {
    const SimulatedDataset sim = generate(builtin_scenario(2, targets[k], 1));
    CHECK(std::fabs(sim.realized_censoring_rate - reference[k]) <= 0.04);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const SimulatedDataset a = generate(builtin_scenario(2, 0.1, 7));
  const SimulatedDataset b = generate(builtin_scenario(2, 0.1, 7));
  const SimulatedDataset c = generate(builtin_scenario(2, 0.1, 8));
  CHECK(a.data.times == b.data.times);
  CHECK(a.data.status == b.data.status);
  CHECK(a.data.covariates == b.data.covariates);
  CHECK(a.data.times != c.data.times);
}

TEST_CASE("scenario validation") {
  ScenarioSpec s = builtin_scenario(1, 0.0);
  s.n = 0;
  CHECK_THROWS_AS(s.validate(), SpecError);
  s = builtin_scenario(1, 0.0);
  s.target_censoring = 1.0;
  CHECK_THROWS_AS(s.validate(), SpecError);
}
