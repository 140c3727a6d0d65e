#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "steincv/common.hpp"
#include "steincv/ensemble.hpp"
#include "steincv/regression.hpp"
#include "steincv/rng.hpp"
#include "steincv/targets.hpp"
#include "steincv/zvcv.hpp"

namespace steincv {

/// Mean squared error per integrand over repetitions.
inline Eigen::VectorXd estimate_mse(const std::vector<Eigen::VectorXd>& estimates,
                                    const Eigen::Ref<const Eigen::VectorXd>& truth) {
  require(!estimates.empty(), "estimate_mse: no repetitions");
  require(truth.allFinite(), "estimate_mse: truth must be finite");
  Eigen::VectorXd mse = Eigen::VectorXd::Zero(truth.size());
  for (const auto& est : estimates) {
    require(est.size() == truth.size(), "estimate_mse: estimate length != truth length");
    mse += (est - truth).cwiseAbs2();
  }
  return mse / static_cast<double>(estimates.size());
}

/// SE per integrand with the scalar summary averaged arithmetically over the
/// T integrands. A zero method MSE is a real outcome (zero variance) and is
/// reported as +inf with the flag set rather than clipped.
struct EfficiencyValue {
  Eigen::VectorXd per_integrand;
  double mean = 0.0;
  bool has_infinite = false;
};

inline EfficiencyValue statistical_efficiency(const Eigen::Ref<const Eigen::VectorXd>& mse_mc,
                                              const Eigen::Ref<const Eigen::VectorXd>& mse_method) {
  require(mse_mc.size() == mse_method.size(), "statistical_efficiency: length mismatch");
  require(mse_mc.minCoeff() >= 0.0 && mse_method.minCoeff() >= 0.0,
          "statistical_efficiency: MSE must be non-negative");
  EfficiencyValue out;
  out.per_integrand.resize(mse_mc.size());
  for (Eigen::Index t = 0; t < mse_mc.size(); ++t) {
    if (mse_method[t] == 0.0) {
      out.per_integrand[t] = std::numeric_limits<double>::infinity();
      out.has_infinite = true;
    } else {
      out.per_integrand[t] = mse_mc[t] / mse_method[t];
    }
  }
  out.mean = out.per_integrand.mean();
  return out;
}

/// OE = SE * runtime_mc / (runtime_method + runtime_mc), with runtime_method
/// the postprocessing time only; sampling cost is the shared runtime_mc term.
inline double overall_efficiency(double se, double runtime_mc, double runtime_method) {
  require(runtime_mc >= 0.0 && runtime_method >= 0.0, "overall_efficiency: negative runtime");
  require(runtime_mc > 0.0 || runtime_method > 0.0, "overall_efficiency: both runtimes are zero");
  return se * runtime_mc / (runtime_method + runtime_mc);
}

/// An estimator under benchmark: id plus a fit callable. The seed argument
/// feeds seeded methods (ensembles, CV folds); deterministic methods ignore it.
struct Method {
  std::string id;
  std::function<Estimate(const SampleSet&, const IntegrandMatrix&, std::uint64_t)> fit;
};

/// One estimator application within one repetition.
struct TrialRecord {
  std::string method;
  int rep = 0;
  Eigen::VectorXd estimates;  // empty when failed
  double sampling_seconds = 0.0;
  double post_seconds = 0.0;
  bool failed = false;
  std::string failure_reason;
};

struct MethodSummary {
  std::string method;
  Eigen::VectorXd mse;  // per integrand
  Eigen::VectorXd se;   // per integrand, +inf sentinel allowed
  double se_mean = 0.0;
  double oe_mean = 0.0;
  bool se_infinite = false;
  int reps_included = 0;
  int reps_failed = 0;
  double mean_post_seconds = 0.0;
};

struct BenchmarkCell {
  std::string target;
  Eigen::Index sample_size = 0;
  Eigen::VectorXd truth;
  std::string truth_source;  // "analytic", "golden-zv3" or "mixed"
  double mean_sampling_seconds = 0.0;
  std::vector<MethodSummary> methods;
  std::vector<TrialRecord> trials;
};

struct BenchmarkConfig {
  std::vector<TargetModel> targets;
  std::vector<Method> methods;
  std::vector<Eigen::Index> sample_sizes;
  int reps = 100;
  Eigen::Index warmup = 1000;
  std::uint64_t seed = 0;
  Eigen::Index golden_size = 100000;  // chain length of the golden ZV3 protocol
};

/// Golden ZV3 truth protocol: regression coefficients fit on one chain, the
/// estimate evaluated on a second chain generated independently of the first.
inline Eigen::VectorXd golden_estimate(const TargetModel& target, Eigen::Index S_large,
                                       Eigen::Index warmup, std::uint64_t seed) {
  const auto d = target.dim;
  if (basis_size(d, 3) >= static_cast<std::uint64_t>(S_large))
    throw IdentifiabilityError("golden_estimate: S_large too small for the ZV3 fit");

  const Chain fit_chain = mala_sample(target, S_large, warmup, 0.0, child_seed(seed, 1));
  const Chain eval_chain = mala_sample(target, S_large, warmup, 0.0, child_seed(seed, 2));

  const PolynomialBasis basis = enumerate_basis(d, 3);
  const DesignMatrix z_fit = build_design_matrix(fit_chain.samples, basis);
  const Eigen::MatrixXd f_fit = evaluate_integrands(target, fit_chain.samples.thetas);
  const FitResult fit = solve_ols(z_fit.values, f_fit);

  const DesignMatrix z_eval = build_design_matrix(eval_chain.samples, basis);
  const Eigen::MatrixXd f_eval = evaluate_integrands(target, eval_chain.samples.thetas);
  return (f_eval - z_eval.values * fit.coefficients).colwise().mean().transpose();
}

struct EfficiencyReport {
  std::vector<BenchmarkCell> cells;
  int reps = 0;
  std::uint64_t seed = 0;

  /// Canonical hex rendering of every statistical quantity (truth, estimates,
  /// MSE, SE) in fixed traversal order. Wall-time measurements and the
  /// time-derived OE column are excluded: they are not reproducible
  /// quantities. Two runs agree bitwise iff their fingerprints match.
  std::string statistical_fingerprint() const {
    std::string out;
    char buf[64];
    const auto add = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%la;", v);
      out += buf;
    };
    for (const auto& cell : cells) {
      out += cell.target + "#" + std::to_string(cell.sample_size) + ":";
      for (Eigen::Index t = 0; t < cell.truth.size(); ++t) add(cell.truth[t]);
      for (const auto& m : cell.methods) {
        out += m.method + "|";
        for (Eigen::Index t = 0; t < m.mse.size(); ++t) add(m.mse[t]);
        for (Eigen::Index t = 0; t < m.se.size(); ++t) add(m.se[t]);
        out += std::to_string(m.reps_included) + "/" + std::to_string(m.reps_failed) + ";";
      }
      for (const auto& trial : cell.trials) {
        out += trial.method + "@" + std::to_string(trial.rep) + (trial.failed ? "!" : "=");
        for (Eigen::Index t = 0; t < trial.estimates.size(); ++t) add(trial.estimates[t]);
      }
      out += "\n";
    }
    return out;
  }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Repeated-trial benchmark. Every (target, S, rep) gets a fresh seeded MALA
/// chain shared by all methods of that repetition; truth comes from analytic
/// means where available and the golden ZV3 protocol otherwise. Method
/// failures are recorded and excluded with a count, never dropped silently.
/// Statistical outputs are a deterministic function of (config, seed).
inline EfficiencyReport run_benchmark(const BenchmarkConfig& config) {
  require(config.reps >= 2, "run_benchmark: needs reps >= 2");
  require(!config.targets.empty(), "run_benchmark: no targets");
  require(!config.sample_sizes.empty(), "run_benchmark: no sample sizes");

  EfficiencyReport report;
  report.reps = config.reps;
  report.seed = config.seed;

  for (std::size_t ti = 0; ti < config.targets.size(); ++ti) {
    const TargetModel& target = config.targets[ti];
    const auto T = static_cast<Eigen::Index>(target.integrands.size());
    require(T >= 1, "run_benchmark: target has no integrands");

    // Truth per integrand: analytic where available, golden ZV3 otherwise.
    Eigen::VectorXd truth(T);
    bool any_golden = false, any_analytic = false;
    Eigen::VectorXd golden;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (target.integrands[static_cast<std::size_t>(t)].analytic_truth) {
        truth[t] = *target.integrands[static_cast<std::size_t>(t)].analytic_truth;
        any_analytic = true;
      } else {
        if (golden.size() == 0)
          golden = golden_estimate(target, config.golden_size, config.warmup,
                                   child_seed(config.seed, ti, 0xdeadULL));
        truth[t] = golden[t];
        any_golden = true;
      }
    }

    for (std::size_t si = 0; si < config.sample_sizes.size(); ++si) {
      const Eigen::Index S = config.sample_sizes[si];
      BenchmarkCell cell;
      cell.target = target.name;
      cell.sample_size = S;
      cell.truth = truth;
      cell.truth_source = any_golden ? (any_analytic ? "mixed" : "golden-zv3") : "analytic";

      std::vector<Eigen::VectorXd> mc_estimates;
      std::vector<std::vector<Eigen::VectorXd>> method_estimates(config.methods.size());
      std::vector<int> failures(config.methods.size(), 0);
      std::vector<double> post_seconds(config.methods.size(), 0.0);
      double sampling_seconds = 0.0;

      for (int rep = 0; rep < config.reps; ++rep) {
        const std::uint64_t rep_seed = child_seed(config.seed, ti, si, static_cast<std::uint64_t>(rep));
        const auto t0 = std::chrono::steady_clock::now();
        const Chain chain = mala_sample(target, S, config.warmup, 0.0, rep_seed);
        const Eigen::MatrixXd f = evaluate_integrands(target, chain.samples.thetas);
        const double sample_time = detail::seconds_since(t0);
        sampling_seconds += sample_time;

        mc_estimates.push_back(vanilla_mc(f).values);

        for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
          TrialRecord trial;
          trial.method = config.methods[mi].id;
          trial.rep = rep;
          trial.sampling_seconds = sample_time;
          const auto m0 = std::chrono::steady_clock::now();
          try {
            const Estimate est =
                config.methods[mi].fit(chain.samples, f, child_seed(rep_seed, mi));
            trial.post_seconds = detail::seconds_since(m0);
            trial.estimates = est.values;
            method_estimates[mi].push_back(est.values);
            post_seconds[mi] += trial.post_seconds;
          } catch (const std::exception& e) {
            trial.post_seconds = detail::seconds_since(m0);
            trial.failed = true;
            trial.failure_reason = e.what();
            ++failures[mi];
          }
          cell.trials.push_back(std::move(trial));
        }
      }

      cell.mean_sampling_seconds = sampling_seconds / config.reps;

      // An MSE at round-off scale relative to the truth is zero at double
      // precision; report it as exactly zero so the zero-variance sentinel
      // (SE = +inf) fires instead of an astronomically large ratio.
      const auto squash_roundoff = [&truth](Eigen::VectorXd mse) {
        for (Eigen::Index t = 0; t < mse.size(); ++t) {
          const double floor_t = 1e-12 * (1.0 + std::abs(truth[t]));
          if (mse[t] <= floor_t * floor_t) mse[t] = 0.0;
        }
        return mse;
      };
      const Eigen::VectorXd mse_mc = squash_roundoff(estimate_mse(mc_estimates, truth));

      for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        MethodSummary summary;
        summary.method = config.methods[mi].id;
        summary.reps_included = static_cast<int>(method_estimates[mi].size());
        summary.reps_failed = failures[mi];
        if (summary.reps_included >= 1) {
          summary.mse = squash_roundoff(estimate_mse(method_estimates[mi], truth));
          const EfficiencyValue se = statistical_efficiency(mse_mc, summary.mse);
          summary.se = se.per_integrand;
          summary.se_mean = se.mean;
          summary.se_infinite = se.has_infinite;
          summary.mean_post_seconds = post_seconds[mi] / summary.reps_included;
          summary.oe_mean = overall_efficiency(se.mean, cell.mean_sampling_seconds,
                                               summary.mean_post_seconds);
        } else {
          summary.mse = Eigen::VectorXd::Constant(T, std::numeric_limits<double>::quiet_NaN());
          summary.se = summary.mse;
          summary.se_mean = std::numeric_limits<double>::quiet_NaN();
          summary.oe_mean = std::numeric_limits<double>::quiet_NaN();
        }
        cell.methods.push_back(std::move(summary));
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

}  // namespace steincv
