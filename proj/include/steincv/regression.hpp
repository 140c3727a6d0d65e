#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <vector>

#include "steincv/common.hpp"
#include "steincv/parallel.hpp"
#include "steincv/rng.hpp"
#include "steincv/stein.hpp"

namespace steincv {

/// Columns of F are vectorised integrand evaluations, one column per expectation.
using IntegrandMatrix = Eigen::MatrixXd;

enum class Penalty { none, ridge, lasso };

inline const char* penalty_name(Penalty p) {
  switch (p) {
    case Penalty::ridge: return "ridge";
    case Penalty::lasso: return "lasso";
    default: return "ols";
  }
}

/// Coefficients of the linear approximation f ~ Z beta + alpha, one column of
/// (intercept, coefficients) per integrand.
struct FitResult {
  Eigen::VectorXd intercept;     // T
  Eigen::MatrixXd coefficients;  // J x T
  Penalty penalty = Penalty::none;
  double lambda = 0.0;
};

namespace detail {

/// Relative magnitude below which a pivoted R diagonal flags rank deficiency.
inline constexpr double kRankTolerance = 1e-10;
/// Coordinate-descent stopping tolerance (standardised coefficient scale).
inline constexpr double kLassoTolerance = 1e-7;
inline constexpr long kLassoMaxSweeps = 10000;

struct Standardized {
  Eigen::MatrixXd z;         // centered columns, divided by their sd
  Eigen::RowVectorXd mean;   // column means
  Eigen::RowVectorXd scale;  // population sd; 1.0 where the column is constant
};

inline Standardized standardize(const Eigen::Ref<const Eigen::MatrixXd>& Z) {
  Standardized s;
  s.mean = Z.colwise().mean();
  s.z = Z.rowwise() - s.mean;
  s.scale = (s.z.colwise().squaredNorm() / static_cast<double>(Z.rows())).cwiseSqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (s.scale[j] == 0.0) s.scale[j] = 1.0;
  s.z.array().rowwise() /= s.scale.array();
  return s;
}

/// Maps standardised-scale coefficients back to the input scale and rebuilds
/// the unpenalised intercept.
inline FitResult map_back(const Eigen::MatrixXd& b_std, const Standardized& s,
                          const Eigen::RowVectorXd& f_mean, Penalty penalty, double lambda) {
  FitResult fit;
  fit.coefficients = b_std.array().colwise() / s.scale.transpose().array();
  fit.intercept = (f_mean - s.mean * fit.coefficients).transpose();
  fit.penalty = penalty;
  fit.lambda = lambda;
  return fit;
}

/// Ridge path on standardised data via one thin SVD: b(lambda) =
/// V diag(sv/(sv^2+lambda)) U' f for any number of lambdas and integrands.
struct RidgePath {
  Eigen::MatrixXd v;         // J x r
  Eigen::VectorXd sv;        // r
  Eigen::MatrixXd ut_f;      // r x T

  RidgePath(const Eigen::Ref<const Eigen::MatrixXd>& z_std,
            const Eigen::Ref<const Eigen::MatrixXd>& f_centered) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(z_std, Eigen::ComputeThinU | Eigen::ComputeThinV);
    v = svd.matrixV();
    sv = svd.singularValues();
    ut_f = svd.matrixU().transpose() * f_centered;
  }

  Eigen::MatrixXd solve(double lambda) const {
    Eigen::VectorXd filter(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      const double denom = sv[i] * sv[i] + lambda;
      filter[i] = denom > 0.0 ? sv[i] / denom : 0.0;
    }
    return v * (filter.asDiagonal() * ut_f);
  }
};

/// Cyclic coordinate descent for min ||z b - f||^2 + sum_j penalty_j |b_j|.
/// `col_sq` holds the column squared norms; columns with zero norm keep b = 0.
/// Starts from `b` (warm start) and updates it in place.
inline void coordinate_descent(const Eigen::Ref<const Eigen::MatrixXd>& z,
                               const Eigen::Ref<const Eigen::VectorXd>& f,
                               const Eigen::Ref<const Eigen::VectorXd>& col_sq,
                               const Eigen::Ref<const Eigen::VectorXd>& penalty,
                               Eigen::VectorXd& b) {
  const Eigen::Index J = z.cols();
  Eigen::VectorXd residual = f - z * b;
  for (long sweep = 1; sweep <= kLassoMaxSweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
      if (col_sq[j] <= 0.0) continue;
      const double old = b[j];
      const double rho = z.col(j).dot(residual) + col_sq[j] * old;
      const double thr = penalty[j] * 0.5;
      double next = 0.0;
      if (rho > thr)
        next = (rho - thr) / col_sq[j];
      else if (rho < -thr)
        next = (rho + thr) / col_sq[j];
      if (next != old) {
        residual.noalias() -= z.col(j) * (next - old);
        b[j] = next;
        max_change = std::max(max_change, std::abs(next - old));
      }
    }
    if (max_change < kLassoTolerance) return;
    if (sweep == kLassoMaxSweeps) {
      char detail[160];
      std::snprintf(detail, sizeof(detail),
                    "solve_lasso: coordinate descent did not converge after %ld sweeps "
                    "(last max change %.3g, tolerance %.3g)",
                    kLassoMaxSweeps, max_change, kLassoTolerance);
      throw ConvergenceError(detail, kLassoMaxSweeps, max_change);
    }
  }
}

}  // namespace detail

/// Ordinary least squares of every F column on Z with an intercept, solved via
/// a column-pivoted QR of the centered design computed once for all columns.
/// Requires S > J; near-dependent columns raise SingularDesignError naming the
/// offending column indices.
inline FitResult solve_ols(const Eigen::Ref<const Eigen::MatrixXd>& Z,
                           const Eigen::Ref<const Eigen::MatrixXd>& F) {
  require(Z.rows() == F.rows(), "solve_ols: Z and F row counts differ");
  const Eigen::Index S = Z.rows();
  const Eigen::Index J = Z.cols();
  if (S <= J) {
    std::ostringstream os;
    os << "solve_ols: unidentifiable, S = " << S << " <= J = " << J
       << "; reduce the basis order or use a regularised / ensemble method";
    throw IdentifiabilityError(os.str());
  }

  const Eigen::RowVectorXd z_mean = Z.colwise().mean();
  const Eigen::RowVectorXd f_mean = F.colwise().mean();
  const Eigen::MatrixXd zc = Z.rowwise() - z_mean;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(zc);
  const auto& r_diag = qr.matrixR().diagonal();
  const double max_diag = std::abs(r_diag[0]);
  std::vector<Eigen::Index> bad;
  for (Eigen::Index k = 0; k < J; ++k) {
    if (std::abs(r_diag[k]) < detail::kRankTolerance * max_diag)
      bad.push_back(qr.colsPermutation().indices()[k]);
  }
  if (!bad.empty()) {
    std::sort(bad.begin(), bad.end());
    std::ostringstream os;
    os << "solve_ols: design is numerically rank deficient; dependent columns:";
    for (auto c : bad) os << ' ' << c;
    throw SingularDesignError(os.str(), bad);
  }

  FitResult fit;
  fit.coefficients = qr.solve(F.rowwise() - f_mean);
  fit.intercept = (f_mean - z_mean * fit.coefficients).transpose();
  fit.penalty = Penalty::none;
  fit.lambda = 0.0;
  return fit;
}

inline FitResult solve_ols(const DesignMatrix& Z, const IntegrandMatrix& F) {
  return solve_ols(Z.values, F);
}

/// Ridge regression with unpenalised intercept: columns are centered and
/// scaled to unit standard deviation, the penalty lambda ||b||^2 applies on
/// that scale, and coefficients are mapped back.
inline FitResult solve_ridge(const Eigen::Ref<const Eigen::MatrixXd>& Z,
                             const Eigen::Ref<const Eigen::MatrixXd>& F, double lambda) {
  require(Z.rows() == F.rows(), "solve_ridge: Z and F row counts differ");
  require(lambda >= 0.0, "solve_ridge: lambda must be non-negative");
  const detail::Standardized s = detail::standardize(Z);
  const Eigen::RowVectorXd f_mean = F.colwise().mean();
  const detail::RidgePath path(s.z, F.rowwise() - f_mean);
  return detail::map_back(path.solve(lambda), s, f_mean, Penalty::ridge, lambda);
}

inline FitResult solve_ridge(const DesignMatrix& Z, const IntegrandMatrix& F, double lambda) {
  return solve_ridge(Z.values, F, lambda);
}

/// LASSO with the raw sum-of-squares objective ||Z b + a - f||^2 + lambda ||b||_1
/// (no 1/(2S) factor; for a solver using glmnet's scaling, lambda_lib =
/// lambda / (2S) gives the same solution). The intercept is unpenalised.
/// Coordinate descent runs on standardised columns with the penalty carried
/// over exactly, so the minimiser is of the objective above, not of a
/// rescaled one.
inline FitResult solve_lasso(const Eigen::Ref<const Eigen::MatrixXd>& Z,
                             const Eigen::Ref<const Eigen::MatrixXd>& F, double lambda) {
  require(Z.rows() == F.rows(), "solve_lasso: Z and F row counts differ");
  require(lambda >= 0.0, "solve_lasso: lambda must be non-negative");
  const detail::Standardized s = detail::standardize(Z);
  const Eigen::RowVectorXd f_mean = F.colwise().mean();
  const Eigen::MatrixXd fc = F.rowwise() - f_mean;
  const Eigen::VectorXd col_sq = s.z.colwise().squaredNorm().transpose();
  // lambda |beta_j| becomes (lambda / scale_j) |b_j| in standardised coordinates.
  const Eigen::VectorXd penalty = lambda * s.scale.transpose().cwiseInverse();

  Eigen::MatrixXd b_std = Eigen::MatrixXd::Zero(Z.cols(), F.cols());
  for (Eigen::Index t = 0; t < F.cols(); ++t) {
    Eigen::VectorXd b = b_std.col(t);
    detail::coordinate_descent(s.z, fc.col(t), col_sq, penalty, b);
    b_std.col(t) = b;
  }
  return detail::map_back(b_std, s, f_mean, Penalty::lasso, lambda);
}

inline FitResult solve_lasso(const DesignMatrix& Z, const IntegrandMatrix& F, double lambda) {
  return solve_lasso(Z.values, F, lambda);
}

/// Smallest lambda with an all-zero LASSO solution: 2 max_j |<z_j - mean, f - mean>|,
/// maximised over integrand columns as well so one grid serves all of them.
inline double lasso_lambda_max(const Eigen::Ref<const Eigen::MatrixXd>& Z,
                               const Eigen::Ref<const Eigen::MatrixXd>& F) {
  const Eigen::MatrixXd zc = Z.rowwise() - Z.colwise().mean();
  const Eigen::MatrixXd fc = F.rowwise() - F.colwise().mean();
  return 2.0 * (zc.transpose() * fc).cwiseAbs().maxCoeff();
}

/// Default cross-validation grid: 100 logarithmically spaced values covering
/// [1e-8, lambda_max].
inline std::vector<double> default_lambda_grid(const Eigen::Ref<const Eigen::MatrixXd>& Z,
                                               const Eigen::Ref<const Eigen::MatrixXd>& F,
                                               int points = 100) {
  require(points >= 2, "default_lambda_grid: needs at least two points");
  const double lo = 1e-8;
  const double hi = std::max(lasso_lambda_max(Z, F), lo * 10.0);
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(points - 1);
  for (int i = 0; i < points; ++i) grid[static_cast<std::size_t>(i)] = std::exp(std::log(lo) + step * i);
  grid.back() = hi;
  return grid;
}

/// Contiguous-block fold assignment: fold f covers the circular index range
/// starting at seed % S, so dependence between nearby MCMC draws stays inside
/// a fold. Returns the fold id per row.
inline std::vector<int> block_folds(Eigen::Index S, int folds, std::uint64_t seed) {
  require(folds >= 2, "block_folds: needs folds >= 2");
  require(S >= folds, "block_folds: needs S >= folds");
  const auto offset = static_cast<Eigen::Index>(seed % static_cast<std::uint64_t>(S));
  std::vector<int> fold_of(static_cast<std::size_t>(S));
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index lo = S * f / folds;
    const Eigen::Index hi = S * (f + 1) / folds;
    for (Eigen::Index i = lo; i < hi; ++i)
      fold_of[static_cast<std::size_t>((i + offset) % S)] = f;
  }
  return fold_of;
}

struct CrossValidationResult {
  std::vector<double> grid;       // ascending
  Eigen::VectorXd chosen_lambda;  // per integrand
  Eigen::MatrixXd mean_error;     // grid x T, mean held-out squared error
};

/// k-fold cross-validation of the penalty level, one chosen lambda per
/// integrand. Held-out error is the mean squared prediction error over all
/// rows; ties are broken toward the larger lambda. Folds are evaluated in
/// parallel into per-fold slabs and reduced in fold order, so the choice does
/// not depend on the execution schedule.
inline CrossValidationResult cross_validate(const Eigen::Ref<const Eigen::MatrixXd>& Z,
                                            const Eigen::Ref<const Eigen::MatrixXd>& F,
                                            Penalty penalty, std::vector<double> grid, int folds,
                                            std::uint64_t seed) {
  require(penalty == Penalty::ridge || penalty == Penalty::lasso,
          "cross_validate: penalty must be ridge or lasso");
  require(!grid.empty(), "cross_validate: empty lambda grid");
  require(Z.rows() == F.rows(), "cross_validate: Z and F row counts differ");
  std::sort(grid.begin(), grid.end());
  for (double l : grid) require(l >= 0.0, "cross_validate: negative lambda in grid");

  const Eigen::Index S = Z.rows();
  const Eigen::Index T = F.cols();
  const auto L = static_cast<Eigen::Index>(grid.size());
  const std::vector<int> fold_of = block_folds(S, folds, seed);

  std::vector<Eigen::MatrixXd> fold_sse(static_cast<std::size_t>(folds));
  parallel_for(folds, [&](std::ptrdiff_t f) {
    std::vector<Eigen::Index> train, test;
    train.reserve(static_cast<std::size_t>(S));
    for (Eigen::Index i = 0; i < S; ++i)
      (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);

    const Eigen::MatrixXd z_train = Z(train, Eigen::all);
    const Eigen::MatrixXd f_train = F(train, Eigen::all);
    const Eigen::MatrixXd z_test = Z(test, Eigen::all);
    const Eigen::MatrixXd f_test = F(test, Eigen::all);

    Eigen::MatrixXd sse = Eigen::MatrixXd::Zero(L, T);
    const detail::Standardized s = detail::standardize(z_train);
    const Eigen::RowVectorXd f_mean = f_train.colwise().mean();
    const Eigen::MatrixXd fc = f_train.rowwise() - f_mean;

    if (penalty == Penalty::ridge) {
      const detail::RidgePath path(s.z, fc);
      for (Eigen::Index l = 0; l < L; ++l) {
        const FitResult fit = detail::map_back(path.solve(grid[static_cast<std::size_t>(l)]), s,
                                               f_mean, Penalty::ridge, 0.0);
        const Eigen::MatrixXd pred =
            (z_test * fit.coefficients).rowwise() + fit.intercept.transpose();
        sse.row(l) = (pred - f_test).array().square().colwise().sum();
      }
    } else {
      const Eigen::VectorXd col_sq = s.z.colwise().squaredNorm().transpose();
      const Eigen::VectorXd inv_scale = s.scale.transpose().cwiseInverse();
      for (Eigen::Index t = 0; t < T; ++t) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(Z.cols());
        for (Eigen::Index l = L - 1; l >= 0; --l) {  // warm start, large to small
          const double lambda = grid[static_cast<std::size_t>(l)];
          detail::coordinate_descent(s.z, fc.col(t), col_sq, lambda * inv_scale, b);
          const Eigen::VectorXd beta = b.cwiseQuotient(s.scale.transpose());
          const double alpha = f_mean[t] - s.mean * beta;
          const Eigen::VectorXd pred = (z_test * beta).array() + alpha;
          sse(l, t) = (pred - f_test.col(t)).squaredNorm();
        }
      }
    }
    fold_sse[static_cast<std::size_t>(f)] = std::move(sse);
  });

  CrossValidationResult result;
  result.grid = grid;
  result.mean_error = Eigen::MatrixXd::Zero(L, T);
  for (const auto& sse : fold_sse) result.mean_error += sse;
  result.mean_error /= static_cast<double>(S);

  result.chosen_lambda.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Index best = L - 1;
    for (Eigen::Index l = L - 2; l >= 0; --l)
      if (result.mean_error(l, t) < result.mean_error(best, t)) best = l;
    result.chosen_lambda[t] = grid[static_cast<std::size_t>(best)];
  }
  return result;
}

}  // namespace steincv
