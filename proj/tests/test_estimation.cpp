#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cweibull/error.hpp"
#include "cweibull/estimation.hpp"
#include "cweibull/simulation.hpp"
#include "cweibull/weibull_aft.hpp"
#include "oracles.hpp"

using namespace cweibull;

namespace {

Dataset single_subject(double t, int status, Eigen::Index p = 0) {
  Dataset d;
  d.times = {t};
  d.status = {status};
  d.covariates = CovariateMatrix::Zero(1, p);
  return d;
}

struct Instance {
  ModelSpec spec;
  Theta theta;
  Dataset data;
};

// Random small problem: L groups over p = L + 1 columns, group l using
// columns {l, l + 1}.
Instance random_instance(Rng& rng, std::size_t n, std::size_t groups, double censor = 0.3) {
  Instance in;
  in.spec.p = groups + 1;
  for (std::size_t l = 0; l < groups; ++l) {
    in.spec.groups.push_back(GroupSpec{{l, l + 1}, "g" + std::to_string(l)});
    in.theta.groups.push_back(GroupParams{rng.uniform() * 2.0 - 0.5,
                                          {rng.normal() * 0.7, rng.normal() * 0.7},
                                          0.6 + 0.8 * rng.uniform()});
  }
  in.data.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in.spec.p));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < in.spec.p; ++j) {
      in.data.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal();
    }
    const Event e = sample_event(in.theta, in.spec, in.data.row(i), rng);
    const bool censored = rng.uniform() < censor;
    in.data.times.push_back(censored ? e.time * rng.uniform() + 1e-3 : e.time);
    in.data.status.push_back(censored ? 0 : 1);
  }
  return in;
}

std::vector<oracle::Component> components(const Theta& theta, const ModelSpec& spec,
                                          RowView x) {
  const ConditionalModel m(theta, spec, x);
  std::vector<oracle::Component> cs;
  for (std::size_t l = 0; l < m.num_groups(); ++l) cs.push_back({m.mu()[l], m.sigma()[l]});
  return cs;
}

// Every beta coordinate bounded away from zero so |beta| is differentiable.
Theta away_from_zero(Theta theta) {
  for (auto& g : theta.groups) {
    for (auto& b : g.beta) {
      if (std::fabs(b) < 0.2) b = b < 0 ? b - 0.2 : b + 0.2;
    }
  }
  return theta;
}

}  // namespace

TEST_CASE("log-likelihood of single exponential subjects") {
  const ModelSpec spec{{GroupSpec{{}, ""}}, 0};
  const Theta theta{{GroupParams{0.0, {}, 1.0}}};
  CHECK(log_likelihood(theta, spec, single_subject(1.0, 1)) == doctest::Approx(-1.0));
  CHECK(log_likelihood(theta, spec, single_subject(2.0, 0)) == doctest::Approx(-2.0));
}

TEST_CASE("log-likelihood agrees with the product-form oracle") {
  Rng rng(101);
  for (int rep = 0; rep < 20; ++rep) {
    const Instance in = random_instance(rng, 5, 2);
    std::vector<std::vector<oracle::Component>> subjects;
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      subjects.push_back(components(in.theta, in.spec, in.data.row(i)));
    }
    const double brute = oracle::log_likelihood(subjects, in.data.times, in.data.status);
    CHECK(log_likelihood(in.theta, in.spec, in.data) == doctest::Approx(brute).epsilon(1e-10));
  }
}

TEST_CASE("log-likelihood overflow names the subject") {
  const ModelSpec spec{{GroupSpec{{0}, ""}}, 1};
  const Theta theta{{GroupParams{0.0, {1.0}, 0.05}}};
  Dataset d;
  d.times = {1.0, 1.0, 1.0};
  d.status = {1, 1, 1};
  d.covariates.resize(3, 1);
  d.covariates << 0.0, -800.0, 0.0;
  try {
    log_likelihood(theta, spec, d);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.subject() == 1);
  }
}

TEST_CASE("E-step rows") {
  Rng rng(102);
  Instance in = random_instance(rng, 30, 3);
  Theta same = in.theta;
  for (auto& g : same.groups) g = GroupParams{0.4, {0.0, 0.0}, 0.9};
  const EtaMatrix flat = e_step(same, in.spec, in.data);
  for (Eigen::Index i = 0; i < flat.rows(); ++i) {
    for (Eigen::Index l = 0; l < 3; ++l) CHECK(flat(i, l) == doctest::Approx(1.0 / 3.0));
  }

  const EtaMatrix eta = e_step(in.theta, in.spec, in.data);
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    const auto cs = components(in.theta, in.spec, in.data.row(i));
    const double t = in.data.times[i];
    for (std::size_t l = 0; l < 3; ++l) {
      const double direct = oracle::component_hazard(cs[l], t) / oracle::hazard(cs, t);
      CHECK(std::fabs(eta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) - direct) <
            1e-12);
    }
  }

  const ModelSpec two{{GroupSpec{{}, ""}, GroupSpec{{0}, ""}}, 1};
  const Theta ratio{{GroupParams{0.0, {}, 1.0}, GroupParams{0.0, {0.0}, 0.5}}};
  const EtaMatrix e2 = e_step(ratio, two, single_subject(1.0, 1, 1));
  CHECK(e2(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(e2(0, 1) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("expected complete-data log-likelihood") {
  Rng rng(103);
  Instance one = random_instance(rng, 40, 1);
  const EtaMatrix ones = EtaMatrix::Ones(40, 1);
  CHECK(q_function(one.theta, one.spec, one.data, ones) ==
        doctest::Approx(log_likelihood(one.theta, one.spec, one.data)).epsilon(1e-12));

  for (int rep = 0; rep < 10; ++rep) {
    Instance in = random_instance(rng, 25, 3);
    const EtaMatrix eta = e_step(in.theta, in.spec, in.data);
    double sum = 0.0;
    for (std::size_t l = 0; l < 3; ++l) sum += q_group(l, in.theta, in.spec, in.data, eta);
    CHECK(std::fabs(sum - q_function(in.theta, in.spec, in.data, eta)) < 1e-12 * std::fabs(sum));
    const Theta next = m_step(in.theta, in.spec, in.data, eta, {}, FitConfig{}).theta;
    CHECK(q_function(in.theta, in.spec, in.data, eta) <=
          q_function(next, in.spec, in.data, eta) + 1e-10);
  }
}

TEST_CASE("score matches central differences of the log-likelihood") {
  Rng rng(104);
  for (int rep = 0; rep < 15; ++rep) {
    const Instance in = random_instance(rng, 50, 1 + rep % 3);
    const auto g = score(in.theta, in.spec, in.data);
    auto flat = in.theta.flatten();
    for (std::size_t k = 0; k < flat.size(); ++k) {
      const double h = 1e-6 * (1.0 + std::fabs(flat[k]));
      auto up = flat;
      auto dn = flat;
      up[k] += h;
      dn[k] -= h;
      const double fd = (log_likelihood(Theta::unflatten(in.spec, up), in.spec, in.data) -
                         log_likelihood(Theta::unflatten(in.spec, dn), in.spec, in.data)) /
                        (2.0 * h);
      CHECK(g[k] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("penalized group gradients match central differences") {
  Rng rng(105);
  const PenaltyConfig penalty{0.7, 0.4};
  for (int rep = 0; rep < 15; ++rep) {
    Instance in = random_instance(rng, 40, 2 + rep % 2);
    const EtaMatrix eta = e_step(in.theta, in.spec, in.data);
    const Theta theta = away_from_zero(in.theta);
    for (std::size_t l = 0; l < in.spec.num_groups(); ++l) {
      const GroupGradient grad = q_gradients(l, theta, in.spec, in.data, eta, penalty);
      auto objective = [&](const Theta& t) {
        return penalized_q_group(l, t, in.spec, in.data, eta, penalty);
      };
      auto fd = [&](auto&& poke) {
        Theta up = theta;
        Theta dn = theta;
        const double h = 1e-6;
        poke(up, h);
        poke(dn, -h);
        return (objective(up) - objective(dn)) / (2.0 * h);
      };
      CHECK(grad.alpha == doctest::Approx(fd([&](Theta& t, double h) { t.groups[l].alpha += h; }))
                              .epsilon(1e-5));
      CHECK(grad.sigma == doctest::Approx(fd([&](Theta& t, double h) { t.groups[l].sigma += h; }))
                              .epsilon(1e-5));
      for (std::size_t j = 0; j < grad.beta.size(); ++j) {
        CHECK(grad.beta[j] ==
              doctest::Approx(fd([&](Theta& t, double h) { t.groups[l].beta[j] += h; }))
                  .epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("score vanishes at the single-group maximum") {
  Rng rng(106);
  const Instance in = random_instance(rng, 300, 1);
  const WeibullAftFit fit = fit_weibull_aft(in.data, in.spec.groups[0].covariate_indices);
  REQUIRE(fit.converged);
  const Theta at{{fit.params}};
  const auto g = score(at, in.spec, in.data);
  double norm = 0.0;
  for (double v : g) norm += v * v;
  CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("soft thresholding zeroes a null covariate exactly") {
  Rng rng(107);
  const std::size_t n = 400;
  Dataset d;
  d.covariates.resize(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    d.covariates(static_cast<Eigen::Index>(i), 0) = rng.normal();
    d.times.push_back(rng.exponential(1.0));
    d.status.push_back(1);
  }
  const ModelSpec spec{{GroupSpec{{0}, ""}}, 1};
  Theta theta{{GroupParams{0.0, {0.3}, 1.0}}};
  const EtaMatrix eta = EtaMatrix::Ones(n, 1);
  const PenaltyConfig strong{0.0, 200.0};
  for (int k = 0; k < 5; ++k) theta = m_step(theta, spec, d, eta, strong, FitConfig{}).theta;
  CHECK(theta.groups[0].beta[0] == 0.0);

  // Without the penalty the estimate stays away from exact zero.
  Theta free{{GroupParams{0.0, {0.3}, 1.0}}};
  for (int k = 0; k < 5; ++k) free = m_step(free, spec, d, eta, {}, FitConfig{}).theta;
  CHECK(free.groups[0].beta[0] != 0.0);
}

TEST_CASE("iterated M-steps on exponential data reach the Weibull MLE") {
  Rng rng(108);
  const std::size_t n = 10000;
  Dataset d;
  d.covariates.resize(n, 0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d.times.push_back(rng.exponential(1.0));
    d.status.push_back(1);
    sum += d.times.back();
  }
  const ModelSpec spec{{GroupSpec{{}, ""}}, 0};
  Theta theta{{GroupParams{0.5, {}, 1.5}}};
  const EtaMatrix eta = EtaMatrix::Ones(static_cast<Eigen::Index>(n), 1);
  for (int k = 0; k < 200; ++k) theta = m_step(theta, spec, d, eta, {}, FitConfig{}).theta;
  const double sigma = theta.groups[0].sigma;
  CHECK(sigma >= 0.97);
  CHECK(sigma <= 1.03);
  // alpha profile: alpha = sigma log(mean T^(1/sigma)), which equals
  // log(mean T) only when sigma is exactly 1.
  double m = 0.0;
  for (double t : d.times) m += std::pow(t, 1.0 / sigma);
  CHECK(theta.groups[0].alpha == doctest::Approx(sigma * std::log(m / n)).epsilon(1e-6));
  CHECK(std::fabs(theta.groups[0].alpha - std::log(sum / n)) < 5e-3);

  const auto se = standard_errors(theta, spec, d);
  CHECK(se[0] == doctest::Approx(1.0 / std::sqrt(n)).epsilon(0.10));
}

TEST_CASE("M-step treats groups independently") {
  Rng rng(109);
  Instance in = random_instance(rng, 80, 3);
  const EtaMatrix eta = e_step(in.theta, in.spec, in.data);
  const Theta a = m_step(in.theta, in.spec, in.data, eta, {0.3, 0.1}, FitConfig{}).theta;

  const std::vector<std::size_t> perm{2, 0, 1};
  ModelSpec spec2;
  spec2.p = in.spec.p;
  Theta theta2;
  EtaMatrix eta2(eta.rows(), eta.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    spec2.groups.push_back(in.spec.groups[perm[k]]);
    theta2.groups.push_back(in.theta.groups[perm[k]]);
    eta2.col(static_cast<Eigen::Index>(k)) = eta.col(static_cast<Eigen::Index>(perm[k]));
  }
  const Theta b = m_step(theta2, spec2, in.data, eta2, {0.3, 0.1}, FitConfig{}).theta;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    CHECK(b.groups[k].alpha == a.groups[perm[k]].alpha);
    CHECK(b.groups[k].beta == a.groups[perm[k]].beta);
    CHECK(b.groups[k].sigma == a.groups[perm[k]].sigma);
  }
}

TEST_CASE("EM is monotone without penalty") {
  Rng rng(110);
  FitConfig config;
  config.n_starts = 1;
  config.compute_standard_errors = false;
  for (int rep = 0; rep < 6; ++rep) {
    const Instance in = random_instance(rng, 150, 1 + rep % 3);
    const FitResult fit = fit_em(in.spec, in.data, {}, config);
    for (std::size_t m = 1; m < fit.loglik_trace.size(); ++m) {
      CHECK(fit.loglik_trace[m] >= fit.loglik_trace[m - 1] - 1e-8);
    }
  }
}

TEST_CASE("penalized EM objective is monotone") {
  Rng rng(111);
  FitConfig config;
  config.n_starts = 1;
  config.compute_standard_errors = false;
  const Instance in = random_instance(rng, 200, 3);
  const FitResult fit = fit_em(in.spec, in.data, {0.5, 0.5}, config);
  for (std::size_t m = 1; m < fit.penalized_trace.size(); ++m) {
    CHECK(fit.penalized_trace[m] >= fit.penalized_trace[m - 1] - 1e-8);
  }
}

TEST_CASE("single-group EM equals the direct Weibull AFT fit") {
  Rng rng(112);
  for (int rep = 0; rep < 3; ++rep) {
    const Instance in = random_instance(rng, 300, 1);
    FitConfig config;
    config.epsilon = 1e-10;
    config.n_starts = 1;
    const FitResult em = fit_em(in.spec, in.data, {}, config);
    const WeibullAftFit direct = fit_weibull_aft(in.data, in.spec.groups[0].covariate_indices);
    CHECK(em.log_likelihood() == doctest::Approx(direct.log_likelihood).epsilon(1e-9));
    CHECK(std::fabs(em.theta_hat.groups[0].alpha - direct.params.alpha) < 1e-4);
    CHECK(std::fabs(em.theta_hat.groups[0].sigma - direct.params.sigma) < 1e-4);
    for (std::size_t j = 0; j < direct.params.beta.size(); ++j) {
      CHECK(std::fabs(em.theta_hat.groups[0].beta[j] - direct.params.beta[j]) < 1e-4);
    }
    for (std::size_t k = 0; k < direct.std_errors.size(); ++k) {
      CHECK(em.std_errors[k] == doctest::Approx(direct.std_errors[k]).epsilon(1e-3));
    }
  }
}

TEST_CASE("EM fixed point is stationary") {
  ScenarioSpec sc = builtin_scenario(1, 0.0, 3);
  sc.n = 10000;
  const SimulatedDataset sim = generate(sc);
  FitConfig config;
  config.n_starts = 1;
  config.epsilon = 1e-8;
  config.compute_standard_errors = false;
  const FitResult fit = fit_em(sc.model, sim.data, {}, config, sc.truth);
  REQUIRE(fit.converged);
  const EtaMatrix eta = e_step(fit.theta_hat, sc.model, sim.data);
  const Theta next = m_step(fit.theta_hat, sc.model, sim.data, eta, {}, config).theta;
  const auto a = fit.theta_hat.flatten();
  const auto b = next.flatten();
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::fabs(a[k] - b[k]) < 1e-3);

  // From the truth a single step moves by sampling noise only.
  const auto se = standard_errors(fit.theta_hat, sc.model, sim.data);
  const EtaMatrix eta0 = e_step(sc.truth, sc.model, sim.data);
  const auto t0 = sc.truth.flatten();
  const auto t1 = m_step(sc.truth, sc.model, sim.data, eta0, {}, config).theta.flatten();
  for (std::size_t k = 0; k < t0.size(); ++k) CHECK(std::fabs(t1[k] - t0[k]) < 3.0 * se[k]);
}

TEST_CASE("warm start from the optimum converges immediately") {
  Rng rng(113);
  const Instance in = random_instance(rng, 300, 2);
  FitConfig config;
  config.n_starts = 1;
  config.compute_standard_errors = false;
  const FitResult first = fit_em(in.spec, in.data, {0.2, 0.1}, config);
  const FitResult again = fit_em(in.spec, in.data, {0.2, 0.1}, config, first.theta_hat);
  CHECK(again.n_iters <= 2);
  CHECK(again.converged);
}

TEST_CASE("multi-start fitting is deterministic") {
  Rng rng(114);
  const Instance in = random_instance(rng, 200, 2);
  FitConfig config;
  config.n_starts = 3;
  config.compute_standard_errors = false;
  const FitResult a = fit_em(in.spec, in.data, {0.1, 0.1}, config);
  const FitResult b = fit_em(in.spec, in.data, {0.1, 0.1}, config);
  CHECK(a.theta_hat.flatten() == b.theta_hat.flatten());
  CHECK(a.best_start == b.best_start);
}

TEST_CASE("singular information is reported with the offending parameters") {
  Rng rng(115);
  const std::size_t n = 200;
  Dataset d;
  d.covariates.resize(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    d.covariates(static_cast<Eigen::Index>(i), 0) = x;
    d.covariates(static_cast<Eigen::Index>(i), 1) = x;
    d.times.push_back(rng.exponential(std::exp(-0.5 * x)));
    d.status.push_back(1);
  }
  const ModelSpec spec{{GroupSpec{{0, 1}, "dup"}}, 2};
  const Theta theta{{GroupParams{0.0, {0.25, 0.25}, 1.0}}};
  try {
    standard_errors(theta, spec, d);
    FAIL("expected SingularHessianError");
  } catch (const SingularHessianError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dup.beta[x1]") != std::string::npos);
    CHECK(msg.find("dup.beta[x2]") != std::string::npos);
  }

  FitConfig config;
  config.n_starts = 1;
  const FitResult fit = fit_em(spec, d, {}, config);
  CHECK(fit.std_errors.empty());
  CHECK_FALSE(fit.std_error_message.empty());
}

TEST_CASE("configuration validation") {
  CHECK_THROWS_AS((PenaltyConfig{-1.0, 0.0}.validate()), ConfigError);
  FitConfig c;
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FitConfig{};
  c.n_starts = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
