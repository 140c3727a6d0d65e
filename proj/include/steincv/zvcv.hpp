#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include "steincv/basis.hpp"
#include "steincv/common.hpp"
#include "steincv/regression.hpp"
#include "steincv/stein.hpp"

namespace steincv {

/// Expectation estimates for the T integrand columns, with fit diagnostics.
struct Estimate {
  Eigen::VectorXd values;  // T
  std::string method;
  Eigen::Index basis_columns = 0;      // J of the underlying design (0 for plain MC)
  Eigen::VectorXd lambda;              // chosen penalty level per integrand; empty if none
  Eigen::VectorXd residual_variance;   // mean squared residual per integrand
  Eigen::VectorXd learner_weights;     // ensemble methods only
};

/// Vanilla Monte Carlo: column means of F.
inline Estimate vanilla_mc(const IntegrandMatrix& F) {
  require(F.rows() >= 1, "vanilla_mc: needs at least one sample");
  require_finite(F, "vanilla_mc: F");
  Estimate est;
  est.values = F.colwise().mean().transpose();
  est.method = "mc";
  est.residual_variance =
      ((F.rowwise() - est.values.transpose()).array().square().colwise().mean()).transpose();
  return est;
}

namespace detail {

inline bool is_constant_column(const Eigen::Ref<const Eigen::VectorXd>& f) {
  return f.maxCoeff() == f.minCoeff();
}

/// Estimate from a fitted linear approximation: the intercept per integrand,
/// cross-checked against the residual-mean form 1'(f - Z beta)/S.
inline Eigen::VectorXd intercept_estimate(const Eigen::MatrixXd& Z, const IntegrandMatrix& F,
                                          const FitResult& fit) {
  const Eigen::VectorXd residual_mean =
      (F - Z * fit.coefficients).colwise().mean().transpose();
  const double gap = (residual_mean - fit.intercept).cwiseAbs().maxCoeff();
  const double scale = 1.0 + fit.intercept.cwiseAbs().maxCoeff();
  if (!(gap <= 1e-8 * scale))
    throw std::logic_error("zvcv: intercept and residual-mean estimates disagree (gap " +
                           std::to_string(gap) + ")");
  return fit.intercept;
}

inline Eigen::VectorXd fit_residual_variance(const Eigen::MatrixXd& Z, const IntegrandMatrix& F,
                                             const FitResult& fit) {
  const Eigen::MatrixXd resid =
      (F - Z * fit.coefficients).rowwise() - fit.intercept.transpose();
  return resid.array().square().colwise().mean().transpose();
}

}  // namespace detail

/// ZVCV with a fixed polynomial order: build the order-Q design, solve OLS for
/// every integrand at once, return the fitted intercepts. Integrand columns
/// with zero variance short-circuit to their constant value.
inline Estimate fit_zvcv(const SampleSet& samples, const IntegrandMatrix& F, int Q) {
  require(F.rows() == samples.rows(), "fit_zvcv: F rows != sample rows");
  require_finite(F, "fit_zvcv: F");
  const auto d = static_cast<int>(samples.dim());
  const Eigen::Index S = samples.rows();
  const std::uint64_t J = basis_size(d, Q);
  if (J >= static_cast<std::uint64_t>(S)) {
    std::ostringstream os;
    os << "fit_zvcv: order " << Q << " gives J = " << J << " >= S = " << S
       << " (C(Q+d,d)-1 must be < S)";
    throw IdentifiabilityError(os.str());
  }

  const PolynomialBasis basis = enumerate_basis(d, Q);
  const DesignMatrix dm = build_design_matrix(samples, basis);
  const Eigen::Index T = F.cols();

  std::vector<Eigen::Index> active;
  for (Eigen::Index t = 0; t < T; ++t)
    if (!detail::is_constant_column(F.col(t))) active.push_back(t);

  FitResult fit;
  fit.intercept = Eigen::VectorXd::Zero(T);
  fit.coefficients = Eigen::MatrixXd::Zero(dm.values.cols(), T);
  for (Eigen::Index t = 0; t < T; ++t) fit.intercept[t] = F(0, t);
  if (!active.empty()) {
    const FitResult sub = solve_ols(dm.values, F(Eigen::all, active));
    for (std::size_t a = 0; a < active.size(); ++a) {
      fit.intercept[active[a]] = sub.intercept[static_cast<Eigen::Index>(a)];
      fit.coefficients.col(active[a]) = sub.coefficients.col(static_cast<Eigen::Index>(a));
    }
  }

  Estimate est;
  est.values = detail::intercept_estimate(dm.values, F, fit);
  est.method = "zv:q=" + std::to_string(Q);
  est.basis_columns = dm.values.cols();
  est.residual_variance = detail::fit_residual_variance(dm.values, F, fit);
  return est;
}

/// How the penalty level of a regularised fit is chosen.
struct LambdaSpec {
  bool use_cv = false;
  double value = 0.0;
  int folds = 10;
  std::uint64_t seed = 0;

  static LambdaSpec fixed(double lambda) { return {false, lambda, 0, 0}; }
  static LambdaSpec cv(int folds, std::uint64_t seed = 0) { return {true, 0.0, folds, seed}; }
};

/// Regularised ZVCV: ridge or LASSO on the order-Q design. Works when S <= J.
/// Under cross-validation one lambda is selected per integrand and each
/// integrand is refit at its own level.
inline Estimate fit_zvcv_regularised(const SampleSet& samples, const IntegrandMatrix& F, int Q,
                                     Penalty penalty, const LambdaSpec& lambda) {
  require(F.rows() == samples.rows(), "fit_zvcv_regularised: F rows != sample rows");
  require_finite(F, "fit_zvcv_regularised: F");
  require(samples.rows() >= 2, "fit_zvcv_regularised: needs S >= 2");
  require(penalty == Penalty::ridge || penalty == Penalty::lasso,
          "fit_zvcv_regularised: penalty must be ridge or lasso");
  if (!lambda.use_cv) require(lambda.value >= 0.0, "fit_zvcv_regularised: negative lambda");

  const auto d = static_cast<int>(samples.dim());
  const PolynomialBasis basis = enumerate_basis(d, Q);
  const DesignMatrix dm = build_design_matrix(samples, basis);
  const Eigen::Index T = F.cols();

  const auto solve_at = [&](const Eigen::Ref<const Eigen::MatrixXd>& rhs, double l) {
    return penalty == Penalty::ridge ? solve_ridge(dm.values, rhs, l)
                                     : solve_lasso(dm.values, rhs, l);
  };

  Eigen::VectorXd chosen(T);
  FitResult fit;
  fit.intercept.resize(T);
  fit.coefficients = Eigen::MatrixXd::Zero(dm.values.cols(), T);

  if (lambda.use_cv) {
    const auto grid = default_lambda_grid(dm.values, F);
    const CrossValidationResult cvr =
        cross_validate(dm.values, F, penalty, grid, lambda.folds, lambda.seed);
    chosen = cvr.chosen_lambda;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (detail::is_constant_column(F.col(t))) {
        fit.intercept[t] = F(0, t);
        continue;
      }
      const FitResult one = solve_at(F.col(t), chosen[t]);
      fit.intercept[t] = one.intercept[0];
      fit.coefficients.col(t) = one.coefficients.col(0);
    }
  } else {
    chosen.setConstant(lambda.value);
    std::vector<Eigen::Index> active;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (detail::is_constant_column(F.col(t)))
        fit.intercept[t] = F(0, t);
      else
        active.push_back(t);
    }
    if (!active.empty()) {
      const FitResult sub = solve_at(F(Eigen::all, active), lambda.value);
      for (std::size_t a = 0; a < active.size(); ++a) {
        fit.intercept[active[a]] = sub.intercept[static_cast<Eigen::Index>(a)];
        fit.coefficients.col(active[a]) = sub.coefficients.col(static_cast<Eigen::Index>(a));
      }
    }
  }

  Estimate est;
  est.values = detail::intercept_estimate(dm.values, F, fit);
  {
    std::ostringstream os;
    os << "rzv:q=" << Q << ",penalty=" << penalty_name(penalty);
    if (lambda.use_cv)
      os << ",cv=" << lambda.folds;
    else
      os << ",lambda=" << lambda.value;
    est.method = os.str();
  }
  est.basis_columns = dm.values.cols();
  est.lambda = chosen;
  est.residual_variance = detail::fit_residual_variance(dm.values, F, fit);
  return est;
}

}  // namespace steincv
