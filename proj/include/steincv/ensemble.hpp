#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "steincv/basis.hpp"
#include "steincv/common.hpp"
#include "steincv/parallel.hpp"
#include "steincv/regression.hpp"
#include "steincv/rng.hpp"
#include "steincv/stein.hpp"
#include "steincv/zvcv.hpp"

namespace steincv {

/// Column selection mapping: selected[j] says whether design column j enters a
/// learner's regression.
struct ColumnMask {
  std::vector<bool> selected;

  Eigen::Index count() const {
    return static_cast<Eigen::Index>(std::count(selected.begin(), selected.end(), true));
  }

  std::vector<Eigen::Index> indices() const {
    std::vector<Eigen::Index> idx;
    idx.reserve(selected.size());
    for (std::size_t j = 0; j < selected.size(); ++j)
      if (selected[j]) idx.push_back(static_cast<Eigen::Index>(j));
    return idx;
  }
};

enum class WeightScheme { uniform, inverse_variance };
enum class ColumnSelection { semi_exact, srswor };
enum class EnsemblePreset { SA, DO, MO, Custom };

inline const char* preset_name(EnsemblePreset p) {
  switch (p) {
    case EnsemblePreset::SA: return "sa";
    case EnsemblePreset::DO: return "do";
    case EnsemblePreset::MO: return "mo";
    default: return "ens";
  }
}

/// Largest base order q in {1, 2} keeping the base block identifiable:
/// argmax_q C(d+q, d) < S.
inline int default_q_base(int d, Eigen::Index S) {
  require(d >= 1, "default_q_base: d must be >= 1");
  if (static_cast<std::uint64_t>(S) <= static_cast<std::uint64_t>(d) + 1)
    throw IdentifiabilityError("default_q_base: S <= d + 1, even order 1 is unidentifiable");
  return binomial_checked(static_cast<std::uint64_t>(d) + 2, 2) < static_cast<std::uint64_t>(S)
             ? 2
             : 1;
}

/// Heuristic number of columns per learner: min(J, max(J_base, floor(0.7 S)))
/// clamped into [J_base, S - 2].
inline Eigen::Index default_j_star(Eigen::Index S, Eigen::Index J, Eigen::Index J_base) {
  require(J_base >= 1 && J_base <= J, "default_j_star: J_base out of range");
  if (J_base >= S - 2)
    throw IdentifiabilityError("default_j_star: J_base >= S - 2 leaves no room for a learner");
  const auto frac = static_cast<Eigen::Index>(0.7 * static_cast<double>(S));
  return std::min({J, std::max(J_base, frac), S - 2});
}

/// SRSWOR over all J columns.
inline ColumnMask select_srswor(Eigen::Index J, Eigen::Index j_star, RngStream& rng) {
  require(j_star >= 1 && j_star <= J, "select_srswor: j_star out of range");
  ColumnMask mask;
  mask.selected.assign(static_cast<std::size_t>(J), false);
  for (int j : sample_without_replacement(static_cast<int>(J), static_cast<int>(j_star), rng))
    mask.selected[static_cast<std::size_t>(j)] = true;
  return mask;
}

/// Semi-exact selection: every monomial of order <= q_base (a graded-lex
/// prefix of the basis) is always selected; the remaining j_star - J_base
/// columns are drawn by SRSWOR from the rest.
inline ColumnMask select_semi_exact(const PolynomialBasis& basis, int q_base, Eigen::Index j_star,
                                    RngStream& rng) {
  require(q_base >= 1 && q_base <= basis.max_order, "select_semi_exact: q_base out of range");
  const Eigen::Index J = basis.size();
  const auto J_base = static_cast<Eigen::Index>(basis_size(basis.dim, q_base));
  if (j_star < J_base)
    throw std::invalid_argument("select_semi_exact: j_star is below the base monomial count");
  require(j_star <= J, "select_semi_exact: j_star exceeds the basis size");

  ColumnMask mask;
  mask.selected.assign(static_cast<std::size_t>(J), false);
  for (Eigen::Index j = 0; j < J_base; ++j) mask.selected[static_cast<std::size_t>(j)] = true;
  for (int j : sample_without_replacement(static_cast<int>(J - J_base),
                                          static_cast<int>(j_star - J_base), rng))
    mask.selected[static_cast<std::size_t>(J_base + j)] = true;
  return mask;
}

/// Learner weights. Uniform gives 1/k; inverse_variance gives
/// w_i proportional to 1/(v_i + eps) with eps = 1e-12 max(v), normalised to
/// sum one. All-zero variances fall back to uniform.
inline Eigen::VectorXd compute_weights(const Eigen::Ref<const Eigen::VectorXd>& residual_variances,
                                       WeightScheme scheme) {
  const Eigen::Index k = residual_variances.size();
  require(k >= 1, "compute_weights: needs at least one learner");
  if (scheme == WeightScheme::uniform)
    return Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  require(residual_variances.minCoeff() >= 0.0, "compute_weights: negative variance");
  const double vmax = residual_variances.maxCoeff();
  if (vmax == 0.0) return Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  const double eps = 1e-12 * vmax;
  Eigen::VectorXd w = (residual_variances.array() + eps).inverse();
  return w / w.sum();
}

struct EnsembleConfig {
  int k = 25;
  int q_max = 5;
  int q_base = 0;           // 0 = resolve via default_q_base
  Eigen::Index j_star = 0;  // 0 = resolve via default_j_star
  double row_fraction = 1.0;
  WeightScheme weight_scheme = WeightScheme::uniform;
  ColumnSelection selection = ColumnSelection::semi_exact;
  std::uint64_t seed = 0;
  EnsemblePreset preset = EnsemblePreset::Custom;

  /// Semi-exact columns, all rows, uniform weights.
  static EnsembleConfig sa(int k = 25, std::uint64_t seed = 0) {
    EnsembleConfig c;
    c.k = k;
    c.seed = seed;
    c.preset = EnsemblePreset::SA;
    return c;
  }

  /// Semi-exact columns plus row subsampling, uniform weights.
  static EnsembleConfig dropout(int k = 25, double row_fraction = 0.8, std::uint64_t seed = 0) {
    EnsembleConfig c;
    c.k = k;
    c.row_fraction = row_fraction;
    c.seed = seed;
    c.preset = EnsemblePreset::DO;
    return c;
  }

  /// Semi-exact columns, all rows, inverse-residual-variance weights.
  static EnsembleConfig mo(int k = 25, std::uint64_t seed = 0) {
    EnsembleConfig c;
    c.k = k;
    c.weight_scheme = WeightScheme::inverse_variance;
    c.seed = seed;
    c.preset = EnsemblePreset::MO;
    return c;
  }
};

/// One trained learner: mask, compact coefficients (mask order), intercept and
/// residual variance per integrand, and the learner's ensemble weight.
struct EnsembleLearner {
  ColumnMask mask;
  Eigen::MatrixXd coefficients;       // J* x T
  Eigen::VectorXd intercept;          // T
  Eigen::VectorXd residual_variance;  // T, on the learner's training rows
  double weight = 0.0;
};

struct EnsembleModel {
  std::vector<EnsembleLearner> learners;
  PolynomialBasis basis;
  int q_base = 0;           // resolved
  Eigen::Index j_star = 0;  // resolved
  std::string method;

  /// Sum of w_i beta_i with each learner's coefficients embedded back into a
  /// full length-J vector (zeros off-mask).
  Eigen::MatrixXd aggregated_coefficients() const {
    const Eigen::Index J = basis.size();
    const Eigen::Index T = learners.empty() ? 0 : learners.front().intercept.size();
    Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(J, T);
    for (const auto& learner : learners) {
      Eigen::Index row = 0;
      for (Eigen::Index j = 0; j < J; ++j) {
        if (!learner.mask.selected[static_cast<std::size_t>(j)]) continue;
        agg.row(j) += learner.weight * learner.coefficients.row(row);
        ++row;
      }
    }
    return agg;
  }
};

namespace detail {

struct ResolvedEnsemble {
  int q_base = 0;
  Eigen::Index j_star = 0;
  Eigen::Index learner_rows = 0;
};

inline ResolvedEnsemble resolve_ensemble(const PolynomialBasis& basis, Eigen::Index S,
                                         const EnsembleConfig& cfg) {
  require(cfg.k >= 1, "fit_ensemble: k must be >= 1");
  require(S >= 10, "fit_ensemble: needs S >= 10");
  require(cfg.row_fraction > 0.0 && cfg.row_fraction <= 1.0,
          "fit_ensemble: row_fraction must be in (0, 1]");

  ResolvedEnsemble r;
  r.q_base = cfg.q_base > 0 ? cfg.q_base : default_q_base(basis.dim, S);
  require(r.q_base >= 1 && r.q_base < cfg.q_max,
          "fit_ensemble: q_base must satisfy 1 <= q_base < q_max");

  r.learner_rows = cfg.row_fraction < 1.0
                       ? std::max<Eigen::Index>(
                             1, static_cast<Eigen::Index>(cfg.row_fraction * static_cast<double>(S)))
                       : S;

  const Eigen::Index J = basis.size();
  const auto J_base = static_cast<Eigen::Index>(basis_size(basis.dim, r.q_base));
  r.j_star = cfg.j_star > 0 ? cfg.j_star : default_j_star(r.learner_rows, J, J_base);
  if (cfg.selection == ColumnSelection::semi_exact)
    require(r.j_star >= J_base, "fit_ensemble: j_star below the base monomial count");
  require(r.j_star >= 1 && r.j_star <= J, "fit_ensemble: j_star out of range");

  if (r.j_star >= r.learner_rows) {
    std::ostringstream os;
    os << "fit_ensemble: unidentifiable learner, j_star = " << r.j_star
       << " >= effective rows = " << r.learner_rows;
    throw IdentifiabilityError(os.str());
  }
  return r;
}

}  // namespace detail

/// Trains the k learners on a prebuilt design matrix. Learner i draws its
/// randomness from a stream derived from (seed, i), selects columns, optionally
/// subsamples rows, and solves OLS on its submatrix. A singular sub-design is
/// retried once with a fresh stream and is an error after that. Learners are
/// fit in parallel; the result is identical for every thread budget.
inline EnsembleModel fit_ensemble(const DesignMatrix& dm, const IntegrandMatrix& F,
                                  const EnsembleConfig& cfg) {
  const Eigen::Index S = dm.values.rows();
  require(F.rows() == S, "fit_ensemble: F rows != design rows");
  require_finite(F, "fit_ensemble: F");
  const detail::ResolvedEnsemble res = detail::resolve_ensemble(dm.basis, S, cfg);

  EnsembleModel model;
  model.basis = dm.basis;
  model.q_base = res.q_base;
  model.j_star = res.j_star;
  {
    std::ostringstream os;
    os << preset_name(cfg.preset) << ":k=" << cfg.k;
    model.method = os.str();
  }
  model.learners.resize(static_cast<std::size_t>(cfg.k));

  parallel_for(cfg.k, [&](std::ptrdiff_t i) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      RngStream rng(child_seed(cfg.seed, static_cast<std::uint64_t>(i),
                               static_cast<std::uint64_t>(attempt)));
      ColumnMask mask = cfg.selection == ColumnSelection::semi_exact
                            ? select_semi_exact(dm.basis, res.q_base, res.j_star, rng)
                            : select_srswor(dm.basis.size(), res.j_star, rng);
      std::vector<Eigen::Index> rows;
      if (res.learner_rows < S) {
        for (int rr : sample_without_replacement(static_cast<int>(S),
                                                 static_cast<int>(res.learner_rows), rng))
          rows.push_back(rr);
      } else {
        rows.resize(static_cast<std::size_t>(S));
        for (Eigen::Index rr = 0; rr < S; ++rr) rows[static_cast<std::size_t>(rr)] = rr;
      }

      const std::vector<Eigen::Index> cols = mask.indices();
      const Eigen::MatrixXd z_sub = dm.values(rows, cols);
      const Eigen::MatrixXd f_sub = F(rows, Eigen::all);
      try {
        const FitResult fit = solve_ols(z_sub, f_sub);
        auto& learner = model.learners[static_cast<std::size_t>(i)];
        learner.mask = std::move(mask);
        learner.coefficients = fit.coefficients;
        learner.intercept = fit.intercept;
        learner.residual_variance =
            ((f_sub - z_sub * fit.coefficients).rowwise() - fit.intercept.transpose())
                .array()
                .square()
                .colwise()
                .mean()
                .transpose();
        return;
      } catch (const SingularDesignError&) {
        if (attempt == 1) throw;
      }
    }
  });

  Eigen::VectorXd scalar_variance(cfg.k);
  for (int i = 0; i < cfg.k; ++i)
    scalar_variance[i] = model.learners[static_cast<std::size_t>(i)].residual_variance.mean();
  const Eigen::VectorXd w = compute_weights(scalar_variance, cfg.weight_scheme);
  for (int i = 0; i < cfg.k; ++i) model.learners[static_cast<std::size_t>(i)].weight = w[i];
  return model;
}

/// Convenience overload that builds the order-q_max design itself.
inline EnsembleModel fit_ensemble(const SampleSet& samples, const IntegrandMatrix& F,
                                  const EnsembleConfig& cfg) {
  require(cfg.q_max >= 1, "fit_ensemble: q_max must be >= 1");
  const PolynomialBasis basis = enumerate_basis(static_cast<int>(samples.dim()), cfg.q_max);
  return fit_ensemble(build_design_matrix(samples, basis), F, cfg);
}

/// Ensemble estimator: aggregate beta = sum_i w_i beta_i once, then the
/// residual mean over all S rows (also for row-subsampled learners).
inline Estimate ensemble_estimate(const EnsembleModel& model, const DesignMatrix& dm,
                                  const IntegrandMatrix& F) {
  require(!model.learners.empty(), "ensemble_estimate: empty model");
  require(dm.values.cols() == model.basis.size(),
          "ensemble_estimate: design and model basis sizes differ");
  require(dm.values.rows() == F.rows(), "ensemble_estimate: design and F row counts differ");
  require(model.learners.front().intercept.size() == F.cols(),
          "ensemble_estimate: integrand count differs from the fitted model");

  const Eigen::MatrixXd beta = model.aggregated_coefficients();
  Estimate est;
  est.values = (F - dm.values * beta).colwise().mean().transpose();
  est.method = model.method;
  est.basis_columns = dm.values.cols();
  est.residual_variance = ((F - dm.values * beta).rowwise() - est.values.transpose())
                              .array()
                              .square()
                              .colwise()
                              .mean()
                              .transpose();
  est.learner_weights.resize(static_cast<Eigen::Index>(model.learners.size()));
  for (std::size_t i = 0; i < model.learners.size(); ++i)
    est.learner_weights[static_cast<Eigen::Index>(i)] = model.learners[i].weight;
  return est;
}

/// fit_ensemble followed by ensemble_estimate on one shared design build.
inline Estimate fit_ensemble_estimate(const SampleSet& samples, const IntegrandMatrix& F,
                                      const EnsembleConfig& cfg) {
  require(cfg.q_max >= 1, "fit_ensemble: q_max must be >= 1");
  const PolynomialBasis basis = enumerate_basis(static_cast<int>(samples.dim()), cfg.q_max);
  const DesignMatrix dm = build_design_matrix(samples, basis);
  const EnsembleModel model = fit_ensemble(dm, F, cfg);
  return ensemble_estimate(model, dm, F);
}

}  // namespace steincv
