#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "steincv/common.hpp"
#include "steincv/rng.hpp"
#include "steincv/stein.hpp"

namespace steincv {

/// A scalar integrand with an optional analytic expectation under its target.
struct Integrand {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> fn;
  std::optional<double> analytic_truth;
};

/// Extra structure available when the target is exactly Gaussian.
struct GaussianInfo {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::LLT<Eigen::MatrixXd> chol;
};

/// A sampling target: log density, its gradient, and whatever analytic truth
/// is available. Tail decay faster than polynomial is assumed and cannot be
/// checked from samples; that obligation stays with the caller.
struct TargetModel {
  std::string name;
  int dim = 0;
  std::function<double(const Eigen::VectorXd&)> log_density;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_log_density;
  std::optional<Eigen::VectorXd> analytic_mean;
  std::shared_ptr<const GaussianInfo> gaussian;  // set only for Gaussian targets
  std::vector<Integrand> integrands;
};

/// Coordinate projection theta -> theta[j].
inline Integrand coordinate_integrand(int j, std::optional<double> truth = std::nullopt) {
  return {"theta" + std::to_string(j + 1),
          [j](const Eigen::VectorXd& theta) { return theta[j]; }, truth};
}

/// Pair product theta -> theta[j] * theta[l].
inline Integrand product_integrand(int j, int l, std::optional<double> truth = std::nullopt) {
  return {"theta" + std::to_string(j + 1) + "theta" + std::to_string(l + 1),
          [j, l](const Eigen::VectorXd& theta) { return theta[j] * theta[l]; }, truth};
}

/// Gaussian N(mean, covariance); covariance must be SPD. Registers the
/// coordinate integrands with their analytic truths.
inline TargetModel gaussian_target(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
  const auto d = static_cast<int>(mean.size());
  require(d >= 1, "gaussian_target: dimension must be >= 1");
  require(covariance.rows() == d && covariance.cols() == d,
          "gaussian_target: covariance shape does not match the mean");

  auto info = std::make_shared<GaussianInfo>();
  info->mean = std::move(mean);
  info->covariance = std::move(covariance);
  info->chol.compute(info->covariance);
  if (info->chol.info() != Eigen::Success)
    throw std::invalid_argument("gaussian_target: covariance is not symmetric positive definite");

  const double log_det =
      2.0 * info->chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double log_norm =
      -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);

  TargetModel target;
  {
    std::ostringstream os;
    os << "gaussian(d=" << d << ")";
    target.name = os.str();
  }
  target.dim = d;
  target.gaussian = info;
  target.analytic_mean = info->mean;
  target.log_density = [info, log_norm](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd c = theta - info->mean;
    return log_norm - 0.5 * c.dot(info->chol.solve(c));
  };
  target.grad_log_density = [info](const Eigen::VectorXd& theta) {
    return Eigen::VectorXd(-info->chol.solve(theta - info->mean));
  };
  for (int j = 0; j < d; ++j)
    target.integrands.push_back(coordinate_integrand(j, info->mean[j]));
  return target;
}

/// Banana-warped Gaussian in pairs of coordinates: within each pair,
/// (y1, y2) = (x1, x2 + b (x1^2 - scale^2)) for (x1, x2) ~ N(0, diag(scale^2, 1)).
/// Every coordinate has analytic mean zero. b = 0 recovers the underlying
/// Gaussian.
inline TargetModel banana_target(int d, double curvature, double scale) {
  require(d >= 2 && d % 2 == 0, "banana_target: d must be an even integer >= 2");
  require(scale > 0.0, "banana_target: scale must be positive");

  const double s2 = scale * scale;
  const double b = curvature;
  const double log_norm =
      -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) -
      0.25 * static_cast<double>(d) * std::log(s2);

  TargetModel target;
  {
    std::ostringstream os;
    os << "banana(d=" << d << ",b=" << b << ",scale=" << scale << ")";
    target.name = os.str();
  }
  target.dim = d;
  target.analytic_mean = Eigen::VectorXd::Zero(d);
  target.log_density = [d, b, s2, log_norm](const Eigen::VectorXd& theta) {
    double acc = log_norm;
    for (int p = 0; p < d; p += 2) {
      const double y1 = theta[p];
      const double x2 = theta[p + 1] - b * (y1 * y1 - s2);
      acc += -0.5 * y1 * y1 / s2 - 0.5 * x2 * x2;
    }
    return acc;
  };
  target.grad_log_density = [d, b, s2](const Eigen::VectorXd& theta) {
    Eigen::VectorXd g(d);
    for (int p = 0; p < d; p += 2) {
      const double y1 = theta[p];
      const double x2 = theta[p + 1] - b * (y1 * y1 - s2);
      g[p] = -y1 / s2 + 2.0 * b * y1 * x2;
      g[p + 1] = -x2;
    }
    return g;
  };
  for (int j = 0; j < d; ++j) target.integrands.push_back(coordinate_integrand(j, 0.0));
  return target;
}

/// Evaluates the target's registered integrands at every sample row.
inline Eigen::MatrixXd evaluate_integrands(const TargetModel& target,
                                           const Eigen::Ref<const Eigen::MatrixXd>& thetas) {
  require(!target.integrands.empty(), "evaluate_integrands: target has no integrands");
  Eigen::MatrixXd f(thetas.rows(), static_cast<Eigen::Index>(target.integrands.size()));
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
    const Eigen::VectorXd theta = thetas.row(i).transpose();
    for (std::size_t t = 0; t < target.integrands.size(); ++t)
      f(i, static_cast<Eigen::Index>(t)) = target.integrands[t].fn(theta);
  }
  return f;
}

/// Exact i.i.d. draws from a Gaussian target with exact gradients attached.
inline SampleSet sample_iid_gaussian(const TargetModel& target, Eigen::Index S,
                                     std::uint64_t seed) {
  require(S >= 1, "sample_iid_gaussian: S must be >= 1");
  if (!target.gaussian)
    throw std::invalid_argument("sample_iid_gaussian: target is not Gaussian");
  const auto& info = *target.gaussian;
  const auto d = static_cast<Eigen::Index>(target.dim);

  RngStream rng(seed);
  Eigen::MatrixXd z(S, d);
  for (Eigen::Index i = 0; i < S; ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();

  const Eigen::MatrixXd l = info.chol.matrixL();
  Eigen::MatrixXd thetas = (z * l.transpose()).rowwise() + info.mean.transpose();
  Eigen::MatrixXd grads =
      -info.chol.solve((thetas.rowwise() - info.mean.transpose()).transpose()).transpose();
  return SampleSet(std::move(thetas), std::move(grads));
}

/// A MALA run: retained states with their gradients plus sampler diagnostics.
struct Chain {
  SampleSet samples;
  double acceptance_rate = 0.0;  // over the retained phase
  Eigen::Index warmup_discarded = 0;
  double step_size = 0.0;  // final (frozen) step size
  std::uint64_t seed = 0;
};

inline constexpr double kMalaTargetAcceptance = 0.574;

/// Metropolis-adjusted Langevin sampler. step_size <= 0 requests automatic
/// tuning: Robbins-Monro on the log step size toward acceptance 0.574 during
/// warmup only, so the retained chain is time-homogeneous. Starts at the
/// analytic mean when known, else the origin.
inline Chain mala_sample(const TargetModel& target, Eigen::Index S, Eigen::Index warmup,
                         double step_size, std::uint64_t seed) {
  require(S >= 1, "mala_sample: S must be >= 1");
  require(warmup >= 0, "mala_sample: warmup must be >= 0");
  const auto d = static_cast<Eigen::Index>(target.dim);

  Eigen::VectorXd theta =
      target.analytic_mean ? *target.analytic_mean : Eigen::VectorXd::Zero(d);
  double log_p = target.log_density(theta);
  if (!std::isfinite(log_p))
    throw std::invalid_argument("mala_sample: log density not finite at the initial point");
  Eigen::VectorXd grad = target.grad_log_density(theta);

  const bool adapt = step_size <= 0.0;
  double eps = adapt ? std::pow(static_cast<double>(d), -1.0 / 6.0) : step_size;
  const double gain = 1.0 / (kMalaTargetAcceptance * (1.0 - kMalaTargetAcceptance));

  RngStream rng(seed);
  Eigen::MatrixXd thetas(S, d);
  Eigen::MatrixXd grads(S, d);
  Eigen::Index accepted = 0;

  Eigen::VectorXd noise(d), proposal(d);
  const auto log_q = [&](const Eigen::VectorXd& to, const Eigen::VectorXd& from,
                         const Eigen::VectorXd& from_grad, double step) {
    const Eigen::VectorXd mean = from + 0.5 * step * step * from_grad;
    return -(to - mean).squaredNorm() / (2.0 * step * step);
  };

  for (Eigen::Index iter = 0; iter < warmup + S; ++iter) {
    for (Eigen::Index j = 0; j < d; ++j) noise[j] = rng.normal();
    proposal = theta + 0.5 * eps * eps * grad + eps * noise;

    const double log_p_prop = target.log_density(proposal);
    bool accept = false;
    Eigen::VectorXd grad_prop;
    if (std::isfinite(log_p_prop)) {
      grad_prop = target.grad_log_density(proposal);
      const double log_ratio = log_p_prop - log_p + log_q(theta, proposal, grad_prop, eps) -
                               log_q(proposal, theta, grad, eps);
      double u = rng.uniform01();
      while (u <= 0.0) u = rng.uniform01();
      accept = std::log(u) < log_ratio;
    }
    if (accept) {
      theta = proposal;
      log_p = log_p_prop;
      grad = std::move(grad_prop);
    }

    if (iter < warmup) {
      if (adapt) {
        const double rate = gain / static_cast<double>(iter + 1);
        eps = std::exp(std::log(eps) + rate * ((accept ? 1.0 : 0.0) - kMalaTargetAcceptance));
      }
    } else {
      const Eigen::Index r = iter - warmup;
      thetas.row(r) = theta.transpose();
      grads.row(r) = grad.transpose();
      if (accept) ++accepted;
    }
  }

  Chain chain{SampleSet(std::move(thetas), std::move(grads)),
              static_cast<double>(accepted) / static_cast<double>(S), warmup, eps, seed};
  return chain;
}

}  // namespace steincv
