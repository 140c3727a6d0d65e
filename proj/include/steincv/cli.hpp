#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "steincv/io.hpp"
#include "steincv/steincv.hpp"

namespace steincv {

/// Stable exit codes; stderr carries one machine-parsable line per failure.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitShape = 2,
  kExitIdentifiability = 3,
  kExitParse = 4,
  kExitNumeric = 5,
};

struct RunConfig {
  std::string command;
  std::string samples_path;
  std::string grads_path;
  std::string integrands_path;
  std::vector<std::string> methods;
  std::vector<std::string> targets;
  std::string sampler = "mala";
  Eigen::Index sample_size = 0;            // generate
  std::vector<Eigen::Index> sample_sizes;  // benchmark
  Eigen::Index warmup = 1000;
  int reps = 100;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = resolve from STEINCV_THREADS, else 1
  std::string out_path;
  std::string format = "json";
};

namespace detail {

inline void emit_error(const char* kind, const std::string& msg) {
  std::cerr << "error: kind=" << kind << " msg=\"" << msg << "\"\n";
}

/// Parses "name[:key=value,...]" specs (methods and targets share the shape).
struct SpecString {
  std::string name;
  std::map<std::string, std::string> params;

  static SpecString parse(const std::string& text) {
    SpecString spec;
    const auto colon = text.find(':');
    spec.name = text.substr(0, colon);
    if (spec.name.empty()) throw ParseError("empty spec name in '" + text + "'");
    if (colon == std::string::npos) return spec;
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ParseError("expected key=value, got '" + item + "' in '" + text + "'");
      spec.params[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return spec;
  }

  double number(const std::string& key, double fallback) const {
    const auto it = params.find(key);
    if (it == params.end()) return fallback;
    double v = 0.0;
    if (!steincv::detail::parse_double(it->second, v))
      throw ParseError("parameter '" + key + "' is not a number: '" + it->second + "'");
    return v;
  }

  long integer(const std::string& key, long fallback) const {
    const double v = number(key, static_cast<double>(fallback));
    const auto i = static_cast<long>(v);
    if (static_cast<double>(i) != v)
      throw ParseError("parameter '" + key + "' must be an integer");
    return i;
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  void reject_unknown(std::initializer_list<const char*> known,
                      const std::string& context) const {
    for (const auto& [key, value] : params) {
      bool found = false;
      for (const char* k : known)
        if (key == k) found = true;
      if (!found) throw ParseError("unknown parameter '" + key + "' for " + context);
    }
  }
};

inline EnsembleConfig ensemble_config_from_spec(const SpecString& spec, std::uint64_t seed) {
  EnsembleConfig cfg;
  if (spec.name == "sa")
    cfg = EnsembleConfig::sa();
  else if (spec.name == "do")
    cfg = EnsembleConfig::dropout();
  else if (spec.name == "mo")
    cfg = EnsembleConfig::mo();
  cfg.k = static_cast<int>(spec.integer("k", cfg.k));
  cfg.q_max = static_cast<int>(spec.integer("qmax", cfg.q_max));
  cfg.q_base = static_cast<int>(spec.integer("qbase", cfg.q_base));
  cfg.j_star = spec.integer("jstar", cfg.j_star);
  cfg.row_fraction = spec.number("rowfrac", cfg.row_fraction);
  const std::string weights =
      spec.text("weights", cfg.weight_scheme == WeightScheme::uniform ? "uniform" : "invvar");
  if (weights == "uniform")
    cfg.weight_scheme = WeightScheme::uniform;
  else if (weights == "invvar")
    cfg.weight_scheme = WeightScheme::inverse_variance;
  else
    throw ParseError("unknown weights scheme '" + weights + "'");
  const std::string select =
      spec.text("select", cfg.selection == ColumnSelection::semi_exact ? "semiexact" : "srswor");
  if (select == "semiexact")
    cfg.selection = ColumnSelection::semi_exact;
  else if (select == "srswor")
    cfg.selection = ColumnSelection::srswor;
  else
    throw ParseError("unknown selection scheme '" + select + "'");
  cfg.seed = static_cast<std::uint64_t>(spec.integer("seed", static_cast<long>(seed)));
  return cfg;
}

}  // namespace detail

/// Builds an estimator from a method spec string:
///   mc | zv:q=Q | rzv:q=Q,penalty=ridge|lasso,{lambda=L | cv=FOLDS}
///   | sa|do|mo|ens:k=K[,qmax,qbase,jstar,rowfrac,weights,select,seed]
/// The returned Method's id is the spec string itself.
inline Method parse_method_spec(const std::string& text) {
  const auto spec = detail::SpecString::parse(text);
  Method method;
  method.id = text;

  if (spec.name == "mc") {
    spec.reject_unknown({}, "mc");
    method.fit = [](const SampleSet&, const IntegrandMatrix& f, std::uint64_t) {
      return vanilla_mc(f);
    };
  } else if (spec.name == "zv") {
    spec.reject_unknown({"q"}, "zv");
    const int q = static_cast<int>(spec.integer("q", 2));
    method.fit = [q](const SampleSet& samples, const IntegrandMatrix& f, std::uint64_t) {
      return fit_zvcv(samples, f, q);
    };
  } else if (spec.name == "rzv") {
    spec.reject_unknown({"q", "penalty", "lambda", "cv"}, "rzv");
    const int q = static_cast<int>(spec.integer("q", 2));
    const std::string penalty_text = spec.text("penalty", "ridge");
    Penalty penalty;
    if (penalty_text == "ridge")
      penalty = Penalty::ridge;
    else if (penalty_text == "lasso")
      penalty = Penalty::lasso;
    else
      throw ParseError("unknown penalty '" + penalty_text + "'");
    if (spec.params.count("lambda") && spec.params.count("cv"))
      throw ParseError("rzv takes lambda= or cv=, not both");
    if (spec.params.count("lambda")) {
      const double lambda = spec.number("lambda", 0.0);
      method.fit = [q, penalty, lambda](const SampleSet& samples, const IntegrandMatrix& f,
                                        std::uint64_t) {
        return fit_zvcv_regularised(samples, f, q, penalty, LambdaSpec::fixed(lambda));
      };
    } else {
      const int folds = static_cast<int>(spec.integer("cv", 10));
      method.fit = [q, penalty, folds](const SampleSet& samples, const IntegrandMatrix& f,
                                       std::uint64_t seed) {
        return fit_zvcv_regularised(samples, f, q, penalty, LambdaSpec::cv(folds, seed));
      };
    }
  } else if (spec.name == "sa" || spec.name == "do" || spec.name == "mo" || spec.name == "ens") {
    spec.reject_unknown({"k", "qmax", "qbase", "jstar", "rowfrac", "weights", "select", "seed"},
                        spec.name);
    detail::ensemble_config_from_spec(spec, 0);  // validate values eagerly
    const bool seed_fixed = spec.params.count("seed") > 0;
    method.fit = [spec, seed_fixed](const SampleSet& samples, const IntegrandMatrix& f,
                                    std::uint64_t seed) {
      EnsembleConfig cfg = detail::ensemble_config_from_spec(spec, seed);
      if (!seed_fixed) cfg.seed = seed;
      return fit_ensemble_estimate(samples, f, cfg);
    };
  } else {
    throw ParseError("unknown method '" + spec.name + "'");
  }
  return method;
}

/// Builds a target from a target spec string:
///   gaussian:d=D[,mean=M,var=V] | banana:d=D[,b=B,scale=C]
inline TargetModel parse_target_spec(const std::string& text) {
  const auto spec = detail::SpecString::parse(text);
  if (spec.name == "gaussian") {
    spec.reject_unknown({"d", "mean", "var"}, "gaussian");
    const int d = static_cast<int>(spec.integer("d", 0));
    if (d < 1) throw ParseError("gaussian target needs d>=1");
    const double mean = spec.number("mean", 0.0);
    const double var = spec.number("var", 1.0);
    if (var <= 0.0) throw ParseError("gaussian target needs var>0");
    TargetModel target = gaussian_target(Eigen::VectorXd::Constant(d, mean),
                                         Eigen::MatrixXd::Identity(d, d) * var);
    target.name = text;
    return target;
  }
  if (spec.name == "banana") {
    spec.reject_unknown({"d", "b", "scale"}, "banana");
    const int d = static_cast<int>(spec.integer("d", 2));
    const double b = spec.number("b", 0.1);
    const double scale = spec.number("scale", 2.0);
    TargetModel target = banana_target(d, b, scale);
    target.name = text;
    return target;
  }
  throw ParseError("unknown target '" + spec.name + "'");
}

/// Resolves the thread budget: --threads beats STEINCV_THREADS beats 1.
inline int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("STEINCV_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  return 1;
}

namespace detail {

inline int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    emit_error("parse", e.what());
    return kExitParse;
  } catch (const IdentifiabilityError& e) {
    emit_error("identifiability", e.what());
    return kExitIdentifiability;
  } catch (const SingularDesignError& e) {
    emit_error("identifiability", e.what());
    return kExitIdentifiability;
  } catch (const ConvergenceError& e) {
    emit_error("numeric", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    emit_error("shape", e.what());
    return kExitShape;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return kExitNumeric;
  }
}

inline void write_or_print(const std::string& out_path, const std::string& content) {
  if (out_path.empty())
    std::cout << content << "\n";
  else
    write_text_file(out_path, content);
}

}  // namespace detail

/// estimate: fit one method on CSV inputs, write a JSON estimate report.
inline int cmd_estimate(const RunConfig& config) {
  return detail::run_guarded([&]() {
    set_thread_budget(resolve_threads(config.threads));
    if (config.methods.size() != 1) throw ParseError("estimate needs exactly one --method");
    const Method method = parse_method_spec(config.methods.front());

    const Eigen::MatrixXd thetas = read_csv_matrix(config.samples_path);
    const Eigen::MatrixXd grads = read_csv_matrix(config.grads_path);
    const Eigen::MatrixXd f = read_csv_matrix(config.integrands_path);
    if (thetas.rows() != grads.rows() || thetas.cols() != grads.cols())
      throw std::invalid_argument("samples and gradients shapes differ");
    if (f.rows() != thetas.rows())
      throw std::invalid_argument("integrand rows differ from sample rows");

    const SampleSet samples(thetas, grads);
    const auto t0 = std::chrono::steady_clock::now();
    const Estimate est = method.fit(samples, f, config.seed);
    const double seconds = detail::seconds_since(t0);

    const auto report =
        estimate_report_json(est, samples.rows(), samples.dim(), config.seed, seconds);
    detail::write_or_print(config.out_path, report.dump(2));
    return kExitOk;
  });
}

/// generate: sample a synthetic target and write samples/grads/integrands CSVs
/// plus a manifest that pins every seed and configuration value.
inline int cmd_generate(const RunConfig& config) {
  return detail::run_guarded([&]() {
    set_thread_budget(resolve_threads(config.threads));
    if (config.targets.size() != 1) throw ParseError("generate needs exactly one --target");
    if (config.out_path.empty()) throw ParseError("generate needs --out PREFIX");
    if (config.sample_size < 1) throw std::invalid_argument("generate needs --S >= 1");
    const TargetModel target = parse_target_spec(config.targets.front());

    nlohmann::json manifest;
    manifest["schema_version"] = kSchemaVersion;
    manifest["kind"] = "manifest";
    manifest["target"] = config.targets.front();
    manifest["sampler"] = config.sampler;
    manifest["S"] = config.sample_size;
    manifest["seed"] = config.seed;
    manifest["dim"] = target.dim;

    SampleSet samples(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1));
    if (config.sampler == "iid") {
      samples = sample_iid_gaussian(target, config.sample_size, config.seed);
      manifest["warmup"] = 0;
    } else if (config.sampler == "mala") {
      Chain chain = mala_sample(target, config.sample_size, config.warmup, 0.0, config.seed);
      manifest["warmup"] = config.warmup;
      manifest["acceptance_rate"] = chain.acceptance_rate;
      manifest["step_size"] = chain.step_size;
      samples = std::move(chain.samples);
    } else {
      throw ParseError("unknown sampler '" + config.sampler + "' (use iid or mala)");
    }

    const Eigen::MatrixXd f = evaluate_integrands(target, samples.thetas);
    std::vector<std::string> names;
    for (const auto& integrand : target.integrands) names.push_back(integrand.name);

    const std::string samples_path = config.out_path + "_samples.csv";
    const std::string grads_path = config.out_path + "_grads.csv";
    const std::string integrands_path = config.out_path + "_integrands.csv";
    write_csv_matrix(samples_path, samples.thetas);
    write_csv_matrix(grads_path, samples.grads);
    write_csv_matrix(integrands_path, f, names);
    manifest["files"] = {{"samples", samples_path},
                         {"grads", grads_path},
                         {"integrands", integrands_path}};
    manifest["integrand_names"] = names;
    write_text_file(config.out_path + "_manifest.json", manifest.dump(2));
    return kExitOk;
  });
}

/// benchmark: repeated-trial comparison across targets, sample sizes and
/// methods; one report row per (target, S, method).
inline int cmd_benchmark(const RunConfig& config) {
  return detail::run_guarded([&]() {
    set_thread_budget(resolve_threads(config.threads));
    if (config.targets.empty()) throw ParseError("benchmark needs at least one --target");
    if (config.methods.empty()) throw ParseError("benchmark needs at least one --method");
    if (config.sample_sizes.empty()) throw ParseError("benchmark needs --S sizes");

    BenchmarkConfig bench;
    for (const auto& text : config.targets) bench.targets.push_back(parse_target_spec(text));
    for (const auto& text : config.methods) bench.methods.push_back(parse_method_spec(text));
    bench.sample_sizes = config.sample_sizes;
    bench.reps = config.reps;
    bench.warmup = config.warmup;
    bench.seed = config.seed;

    const EfficiencyReport report = run_benchmark(bench);
    if (config.format == "csv")
      detail::write_or_print(config.out_path, benchmark_report_csv(report));
    else if (config.format == "json")
      detail::write_or_print(config.out_path, benchmark_report_json(report).dump(2));
    else
      throw ParseError("unknown format '" + config.format + "' (use csv or json)");
    return kExitOk;
  });
}

/// check: zero-mean diagnostic over a Q=2 design built from user-supplied
/// samples and gradients; flags columns violating the 5-standard-error bound.
inline int cmd_check(const RunConfig& config) {
  return detail::run_guarded([&]() {
    set_thread_budget(resolve_threads(config.threads));
    const Eigen::MatrixXd thetas = read_csv_matrix(config.samples_path);
    const Eigen::MatrixXd grads = read_csv_matrix(config.grads_path);
    if (thetas.rows() != grads.rows() || thetas.cols() != grads.cols())
      throw std::invalid_argument("samples and gradients shapes differ");
    const SampleSet samples(thetas, grads);

    const PolynomialBasis basis = enumerate_basis(static_cast<int>(samples.dim()), 2);
    const DesignMatrix dm = build_design_matrix(samples, basis);
    const auto diags = check_zero_mean(dm);  // rejects S < 30

    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "check_report";
    j["rows"] = samples.rows();
    j["dim"] = samples.dim();
    j["basis_columns"] = basis.size();
    j["columns"] = nlohmann::json::array();
    int flagged = 0;
    for (std::size_t c = 0; c < diags.size(); ++c) {
      std::string monomial;
      for (int e : basis.indices[c].exponents)
        monomial += (monomial.empty() ? "" : ",") + std::to_string(e);
      j["columns"].push_back({{"index", c},
                              {"monomial", monomial},
                              {"mean", diags[c].mean},
                              {"se", diags[c].se},
                              {"pass", diags[c].pass}});
      if (!diags[c].pass) ++flagged;
    }
    j["flagged_columns"] = flagged;
    detail::write_or_print(config.out_path, j.dump(2));
    return kExitOk;
  });
}

inline int run_command(const RunConfig& config) {
  if (config.command == "estimate") return cmd_estimate(config);
  if (config.command == "generate") return cmd_generate(config);
  if (config.command == "benchmark") return cmd_benchmark(config);
  if (config.command == "check") return cmd_check(config);
  detail::emit_error("parse", "unknown command '" + config.command + "'");
  return kExitParse;
}

}  // namespace steincv
