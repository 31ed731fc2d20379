#include "cweibull/weibull_aft.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "cweibull/error.hpp"

namespace cweibull {

namespace {

struct Evaluation {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Log-likelihood, gradient and Hessian in (alpha, beta, sigma).
Evaluation evaluate(const Dataset& data, std::span<const std::size_t> idx,
                    const Eigen::VectorXd& v, bool derivatives) {
  const std::size_t p = idx.size();
  const std::size_t d = p + 2;
  const double sigma = v[static_cast<Eigen::Index>(d - 1)];
  const double log_sigma = std::log(sigma);
  Evaluation ev;
  if (derivatives) {
    ev.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    ev.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                       static_cast<Eigen::Index>(d));
  }
  Eigen::VectorXd a(static_cast<Eigen::Index>(p + 1));
  const auto s = static_cast<Eigen::Index>(d - 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const RowView x = data.row(i);
    a[0] = 1.0;
    double mu = v[0];
    for (std::size_t k = 0; k < p; ++k) {
      a[static_cast<Eigen::Index>(k + 1)] = x[idx[k]];
      mu += x[idx[k]] * v[static_cast<Eigen::Index>(k + 1)];
    }
    const double log_t = std::log(data.times[i]);
    const double z = (log_t - mu) / sigma;
    const double e = std::exp(z);
    const double delta = data.status[i];
    ev.loglik += delta * (z - log_sigma - log_t) - e;
    if (!derivatives) continue;
    const double g_mu = (e - delta) / sigma;
    const double g_sigma = (-delta * z - delta + z * e) / sigma;
    const double s2 = sigma * sigma;
    const double h_mumu = -e / s2;
    const double h_musigma = -(z * e + e - delta) / s2;
    const double h_sigmasigma = (2 * delta * z + delta - 2 * z * e - z * z * e) / s2;
    ev.gradient.head(static_cast<Eigen::Index>(p + 1)) += g_mu * a;
    ev.gradient[s] += g_sigma;
    ev.hessian.topLeftCorner(static_cast<Eigen::Index>(p + 1),
                             static_cast<Eigen::Index>(p + 1))
        .selfadjointView<Eigen::Lower>()
        .rankUpdate(a, h_mumu);
    ev.hessian.block(s, 0, 1, static_cast<Eigen::Index>(p + 1)) +=
        h_musigma * a.transpose();
    ev.hessian(s, s) += h_sigmasigma;
  }
  if (derivatives) {
    ev.hessian = ev.hessian.selfadjointView<Eigen::Lower>();
  }
  return ev;
}

}  // namespace

WeibullAftFit fit_weibull_aft(const Dataset& data,
                              std::span<const std::size_t> covariate_indices,
                              int max_iters, double tolerance) {
  data.validate();
  for (std::size_t j : covariate_indices) {
    if (j >= data.num_covariates()) {
      throw SpecError("Weibull AFT covariate index out of range");
    }
  }
  const std::size_t d = covariate_indices.size() + 2;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  const double mean_t =
      std::accumulate(data.times.begin(), data.times.end(), 0.0) /
      static_cast<double>(data.size());
  v[0] = std::log(mean_t);
  v[static_cast<Eigen::Index>(d - 1)] = 1.0;

  WeibullAftFit fit;
  Evaluation ev = evaluate(data, covariate_indices, v, true);
  for (int it = 0; it < max_iters; ++it) {
    fit.iterations = it + 1;
    Eigen::VectorXd step;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-ev.hessian);
    const bool newton_ok = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                           (ldlt.vectorD().array() > 0).all();
    if (newton_ok) {
      step = ldlt.solve(ev.gradient);
    } else {
      step = ev.gradient / std::max(1.0, ev.hessian.diagonal().cwiseAbs().sum());
    }
    double scale = 1.0;
    bool improved = false;
    Evaluation next;
    Eigen::VectorXd candidate;
    for (int half = 0; half < 60; ++half, scale *= 0.5) {
      candidate = v + scale * step;
      if (!(candidate[static_cast<Eigen::Index>(d - 1)] > 0.0)) continue;
      next = evaluate(data, covariate_indices, candidate, false);
      if (std::isfinite(next.loglik) && next.loglik >= ev.loglik) {
        improved = true;
        break;
      }
    }
    if (!improved) {
      fit.converged = ev.gradient.lpNorm<Eigen::Infinity>() <
                      1e-6 * static_cast<double>(data.size());
      break;
    }
    const double change = (candidate - v).lpNorm<Eigen::Infinity>();
    v = candidate;
    ev = evaluate(data, covariate_indices, v, true);
    if (change < tolerance) {
      fit.converged = true;
      break;
    }
  }

  fit.params.alpha = v[0];
  fit.params.beta.assign(v.data() + 1, v.data() + d - 1);
  fit.params.sigma = v[static_cast<Eigen::Index>(d - 1)];
  fit.log_likelihood = ev.loglik;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-ev.hessian);
  if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0.0) {
    const Eigen::MatrixXd cov = eig.eigenvectors() *
                                eig.eigenvalues().cwiseInverse().asDiagonal() *
                                eig.eigenvectors().transpose();
    for (Eigen::Index k = 0; k < cov.rows(); ++k) {
      fit.std_errors.push_back(std::sqrt(cov(k, k)));
    }
  }
  return fit;
}

}  // namespace cweibull
