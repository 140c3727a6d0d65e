#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "steincv/basis.hpp"
#include "steincv/common.hpp"
#include "steincv/parallel.hpp"

namespace steincv {

/// Sample points and the log-target gradient evaluated at each of them.
/// Gradients are caller-supplied; they are validated, never derived here.
struct SampleSet {
  Eigen::MatrixXd thetas;  // S x d
  Eigen::MatrixXd grads;   // S x d

  SampleSet(Eigen::MatrixXd thetas_in, Eigen::MatrixXd grads_in)
      : thetas(std::move(thetas_in)), grads(std::move(grads_in)) {
    require(thetas.rows() == grads.rows() && thetas.cols() == grads.cols(),
            "SampleSet: thetas and grads must have identical shape");
    require(thetas.rows() >= 1, "SampleSet: at least one sample required");
    require_finite(thetas, "SampleSet: thetas");
    require_finite(grads, "SampleSet: grads");
  }

  Eigen::Index rows() const { return thetas.rows(); }
  Eigen::Index dim() const { return thetas.cols(); }
};

/// S x J matrix whose (i, j) entry is the second-order Langevin-Stein operator
/// applied to the j-th basis monomial at sample i.
struct DesignMatrix {
  Eigen::MatrixXd values;
  PolynomialBasis basis;
};

namespace detail {

/// L2 theta^alpha = sum_j a_j(a_j-1) theta^(a-2e_j) + sum_j a_j theta^(a-e_j) g_j,
/// evaluated from a precomputed power table so the scalar and matrix paths
/// produce bit-identical values.
inline double stein_l2_from_table(const MultiIndex& alpha, const PowerTable& table,
                                  const Eigen::Ref<const Eigen::RowVectorXd>& grad) {
  double acc = 0.0;
  for (int j = 0; j < alpha.dim(); ++j) {
    const int aj = alpha.exponents[static_cast<std::size_t>(j)];
    if (aj == 0) continue;
    const double rest = monomial_value_excluding(alpha, table, j);
    acc += static_cast<double>(aj) * table.pow(aj - 1, j) * rest * grad[j];
    if (aj >= 2) acc += static_cast<double>(aj) * static_cast<double>(aj - 1) * table.pow(aj - 2, j) * rest;
  }
  return acc;
}

}  // namespace detail

/// Second-order Langevin-Stein operator applied to theta^alpha at one point.
inline double stein_l2(const MultiIndex& alpha, const Eigen::Ref<const Eigen::VectorXd>& theta,
                       const Eigen::Ref<const Eigen::VectorXd>& grad) {
  require(alpha.dim() == theta.size() && alpha.dim() == grad.size(),
          "stein_l2: dimension mismatch");
  const detail::PowerTable table(theta.transpose(), alpha.order());
  return detail::stein_l2_from_table(alpha, table, grad.transpose());
}

/// Assembles the ZVCV design matrix. Rows follow sample order, columns follow
/// basis order; rows are independent and are computed in parallel under the
/// current thread budget with bit-identical results for any budget.
inline DesignMatrix build_design_matrix(const SampleSet& samples, const PolynomialBasis& basis) {
  require(samples.dim() == basis.dim, "build_design_matrix: sample dim != basis dim");
  const Eigen::Index S = samples.rows();
  const Eigen::Index J = basis.size();

  DesignMatrix dm;
  dm.basis = basis;
  dm.values.resize(S, J);
  parallel_for(S, [&](std::ptrdiff_t i) {
    const detail::PowerTable table(samples.thetas.row(i), basis.max_order);
    for (Eigen::Index j = 0; j < J; ++j) {
      dm.values(i, j) = detail::stein_l2_from_table(basis.indices[static_cast<std::size_t>(j)],
                                                    table, samples.grads.row(i));
    }
  });
  return dm;
}

/// Zero-mean diagnostic for one design column.
struct ColumnDiagnostic {
  double mean = 0.0;
  double se = 0.0;
  bool pass = false;
};

/// Checks E[L2 u] = 0 column by column: sample mean, its standard error, and a
/// |mean| <= 5 se flag. Diagnostic only; useful as a smoke test for wrong or
/// sign-flipped gradients.
inline std::vector<ColumnDiagnostic> check_zero_mean(const DesignMatrix& dm) {
  const Eigen::Index S = dm.values.rows();
  require(S >= 30, "check_zero_mean: needs S >= 30");
  std::vector<ColumnDiagnostic> out(static_cast<std::size_t>(dm.values.cols()));
  for (Eigen::Index j = 0; j < dm.values.cols(); ++j) {
    const auto col = dm.values.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(S - 1);
    const double se = std::sqrt(var / static_cast<double>(S));
    out[static_cast<std::size_t>(j)] = {mean, se, std::abs(mean) <= 5.0 * se};
  }
  return out;
}

}  // namespace steincv
