#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "schema_check.hpp"
#include "steincv/cli.hpp"

using namespace steincv;

namespace {

namespace fs = std::filesystem;

fs::path test_dir() {
  const auto dir = fs::temp_directory_path() / "steincv_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig generate_config(const std::string& target, const std::string& sampler, Eigen::Index S,
                          std::uint64_t seed, const std::string& prefix) {
  RunConfig config;
  config.command = "generate";
  config.targets = {target};
  config.sampler = sampler;
  config.sample_size = S;
  config.seed = seed;
  config.out_path = (test_dir() / prefix).string();
  return config;
}

}  // namespace

TEST_CASE("generate writes consistent CSVs and a schema-valid manifest", "[cli]") {
  const auto config = generate_config("gaussian:d=2", "iid", 100, 5, "gen2d");
  REQUIRE(cmd_generate(config) == kExitOk);

  const Eigen::MatrixXd samples = read_csv_matrix(config.out_path + "_samples.csv");
  const Eigen::MatrixXd grads = read_csv_matrix(config.out_path + "_grads.csv");
  const Eigen::MatrixXd f = read_csv_matrix(config.out_path + "_integrands.csv");
  CHECK(samples.rows() == 100);
  CHECK(samples.cols() == 2);
  CHECK(grads.rows() == 100);
  CHECK(f.rows() == 100);
  CHECK(f.cols() == 2);

  const auto manifest = nlohmann::json::parse(slurp(config.out_path + "_manifest.json"));
  schema_check::validate_against_file("manifest.schema.json", manifest);
  CHECK(manifest["S"] == 100);
  CHECK(manifest["sampler"] == "iid");
}

TEST_CASE("generate is deterministic in the seed", "[cli]") {
  const auto a = generate_config("gaussian:d=1,mean=3,var=4", "iid", 50, 9, "det_a");
  const auto b = generate_config("gaussian:d=1,mean=3,var=4", "iid", 50, 9, "det_b");
  REQUIRE(cmd_generate(a) == kExitOk);
  REQUIRE(cmd_generate(b) == kExitOk);
  CHECK(slurp(a.out_path + "_samples.csv") == slurp(b.out_path + "_samples.csv"));
  CHECK(slurp(a.out_path + "_grads.csv") == slurp(b.out_path + "_grads.csv"));
}

TEST_CASE("generate records MALA warmup in the manifest", "[cli]") {
  auto config = generate_config("banana:d=2,b=0.2,scale=1.5", "mala", 60, 4, "mala_gen");
  config.warmup = 1000;
  REQUIRE(cmd_generate(config) == kExitOk);
  const auto manifest = nlohmann::json::parse(slurp(config.out_path + "_manifest.json"));
  schema_check::validate_against_file("manifest.schema.json", manifest);
  CHECK(manifest["warmup"] == 1000);
  CHECK(manifest.contains("acceptance_rate"));
  CHECK(manifest.contains("step_size"));
}

TEST_CASE("round trip: estimate consumes generate output unchanged", "[cli]") {
  // N(3, 4) fixture: ZVCV at order 1 recovers the mean exactly.
  const auto gen = generate_config("gaussian:d=1,mean=3,var=4", "iid", 40, 17, "round");
  REQUIRE(cmd_generate(gen) == kExitOk);

  RunConfig est;
  est.command = "estimate";
  est.samples_path = gen.out_path + "_samples.csv";
  est.grads_path = gen.out_path + "_grads.csv";
  est.integrands_path = gen.out_path + "_integrands.csv";
  est.methods = {"zv:q=1"};
  est.seed = 1;
  est.out_path = (test_dir() / "round_report.json").string();
  REQUIRE(cmd_estimate(est) == kExitOk);

  const auto report = nlohmann::json::parse(slurp(est.out_path));
  schema_check::validate_against_file("estimate_report.schema.json", report);
  CHECK(report["method"] == "zv:q=1");
  CHECK(std::abs(report["estimates"][0].get<double>() - 3.0) <= 1e-10);
}

TEST_CASE("estimate with mc returns the integrand column means", "[cli]") {
  const auto gen = generate_config("gaussian:d=2", "iid", 30, 23, "mc_in");
  REQUIRE(cmd_generate(gen) == kExitOk);
  const Eigen::MatrixXd f = read_csv_matrix(gen.out_path + "_integrands.csv");

  RunConfig est;
  est.command = "estimate";
  est.samples_path = gen.out_path + "_samples.csv";
  est.grads_path = gen.out_path + "_grads.csv";
  est.integrands_path = gen.out_path + "_integrands.csv";
  est.methods = {"mc"};
  est.out_path = (test_dir() / "mc_report.json").string();
  REQUIRE(cmd_estimate(est) == kExitOk);

  const auto report = nlohmann::json::parse(slurp(est.out_path));
  CHECK(report["estimates"][0].get<double>() == Catch::Approx(f.col(0).mean()).margin(1e-15));
  CHECK(report["estimates"][1].get<double>() == Catch::Approx(f.col(1).mean()).margin(1e-15));
}

TEST_CASE("seeded ensemble estimates are byte-identical apart from timing", "[cli]") {
  const auto gen = generate_config("gaussian:d=2", "iid", 120, 31, "ens_in");
  REQUIRE(cmd_generate(gen) == kExitOk);

  RunConfig est;
  est.command = "estimate";
  est.samples_path = gen.out_path + "_samples.csv";
  est.grads_path = gen.out_path + "_grads.csv";
  est.integrands_path = gen.out_path + "_integrands.csv";
  est.methods = {"sa:k=25"};
  est.seed = 7;

  est.out_path = (test_dir() / "sa_a.json").string();
  REQUIRE(cmd_estimate(est) == kExitOk);
  est.out_path = (test_dir() / "sa_b.json").string();
  REQUIRE(cmd_estimate(est) == kExitOk);

  auto a = nlohmann::json::parse(slurp(test_dir() / "sa_a.json"));
  auto b = nlohmann::json::parse(slurp(test_dir() / "sa_b.json"));
  a.erase("timing");
  b.erase("timing");
  CHECK(a.dump() == b.dump());  // wall time is the only nondeterministic field
}

TEST_CASE("estimate exit codes are stable", "[cli]") {
  const auto gen = generate_config("gaussian:d=2", "iid", 20, 41, "codes");
  REQUIRE(cmd_generate(gen) == kExitOk);

  RunConfig est;
  est.command = "estimate";
  est.samples_path = gen.out_path + "_samples.csv";
  est.grads_path = gen.out_path + "_grads.csv";
  est.integrands_path = gen.out_path + "_integrands.csv";
  est.methods = {"zv:q=1"};
  est.out_path = (test_dir() / "codes_report.json").string();

  SECTION("missing file is a parse error") {
    est.samples_path = (test_dir() / "missing.csv").string();
    CHECK(cmd_estimate(est) == kExitParse);
  }
  SECTION("shape mismatch") {
    const auto truncated = test_dir() / "short_grads.csv";
    const Eigen::MatrixXd grads = read_csv_matrix(est.grads_path);
    write_csv_matrix(truncated.string(), grads.topRows(10));
    est.grads_path = truncated.string();
    CHECK(cmd_estimate(est) == kExitShape);
  }
  SECTION("identifiability") {
    est.methods = {"zv:q=5"};  // J = 20 >= S = 20
    CHECK(cmd_estimate(est) == kExitIdentifiability);
  }
  SECTION("bad method spec") {
    est.methods = {"zv:q=2,bogus=1"};
    CHECK(cmd_estimate(est) == kExitParse);
    est.methods = {"nope"};
    CHECK(cmd_estimate(est) == kExitParse);
  }
}

TEST_CASE("check flags sign-flipped gradients and validates shapes", "[cli]") {
  const auto gen = generate_config("gaussian:d=1", "iid", 4000, 51, "check_in");
  REQUIRE(cmd_generate(gen) == kExitOk);

  RunConfig check;
  check.command = "check";
  check.samples_path = gen.out_path + "_samples.csv";
  check.grads_path = gen.out_path + "_grads.csv";
  check.out_path = (test_dir() / "check_ok.json").string();
  REQUIRE(cmd_check(check) == kExitOk);
  const auto ok = nlohmann::json::parse(slurp(check.out_path));
  schema_check::validate_against_file("check_report.schema.json", ok);
  CHECK(ok["flagged_columns"] == 0);

  // Sign-flip the gradients: theta^2 columns must be flagged.
  const Eigen::MatrixXd grads = read_csv_matrix(check.grads_path);
  const auto flipped = test_dir() / "flipped_grads.csv";
  write_csv_matrix(flipped.string(), (-grads).eval());
  check.grads_path = flipped.string();
  check.out_path = (test_dir() / "check_bad.json").string();
  REQUIRE(cmd_check(check) == kExitOk);
  const auto bad = nlohmann::json::parse(slurp(check.out_path));
  CHECK(bad["flagged_columns"].get<int>() >= 1);
  bool theta_sq_flagged = false;
  for (const auto& col : bad["columns"])
    if (col["monomial"] == "2" && col["pass"] == false) theta_sq_flagged = true;
  CHECK(theta_sq_flagged);

  // Too few rows is a refusal with exit 2.
  const auto small = generate_config("gaussian:d=1", "iid", 29, 3, "check_small");
  REQUIRE(cmd_generate(small) == kExitOk);
  check.samples_path = small.out_path + "_samples.csv";
  check.grads_path = small.out_path + "_grads.csv";
  CHECK(cmd_check(check) == kExitShape);
}

TEST_CASE("benchmark command emits schema-valid JSON and CSV", "[cli]") {
  RunConfig bench;
  bench.command = "benchmark";
  bench.targets = {"gaussian:d=1"};
  bench.methods = {"mc", "zv:q=1"};
  bench.sample_sizes = {40};
  bench.reps = 3;
  bench.warmup = 100;
  bench.seed = 2;
  bench.out_path = (test_dir() / "bench.json").string();
  REQUIRE(cmd_benchmark(bench) == kExitOk);

  const auto report = nlohmann::json::parse(slurp(bench.out_path));
  schema_check::validate_against_file("benchmark_report.schema.json", report);
  REQUIRE(report["cells"].size() == 1);
  const auto& methods = report["cells"][0]["methods"];
  CHECK(methods[0]["method"] == "mc");
  CHECK(methods[0]["se_mean"] == 1.0);
  CHECK(methods[1]["se_infinite"] == true);  // zero-variance case

  bench.format = "csv";
  bench.out_path = (test_dir() / "bench.csv").string();
  REQUIRE(cmd_benchmark(bench) == kExitOk);
  const std::string csv = slurp(bench.out_path);
  CHECK(csv.rfind("target,", 0) == 0);
  CHECK(csv.find("mc") != std::string::npos);
}

TEST_CASE("the built binary runs a generate/estimate round trip", "[cli]") {
  const auto prefix = (test_dir() / "bin_round").string();
  const std::string generate = std::string(STEINCV_CLI_PATH) +
                               " generate --target gaussian:d=1,mean=3,var=4 --sampler iid" +
                               " --S 50 --seed 11 --out " + prefix + " 2>/dev/null";
  REQUIRE(std::system(generate.c_str()) == 0);

  const auto report_path = (test_dir() / "bin_round_report.json").string();
  const std::string estimate = std::string(STEINCV_CLI_PATH) + " estimate --samples " + prefix +
                               "_samples.csv --grads " + prefix + "_grads.csv --integrands " +
                               prefix + "_integrands.csv --method zv:q=1 --out " + report_path +
                               " 2>/dev/null";
  REQUIRE(std::system(estimate.c_str()) == 0);
  const auto report = nlohmann::json::parse(slurp(report_path));
  CHECK(std::abs(report["estimates"][0].get<double>() - 3.0) <= 1e-10);

  // Unknown method surfaces the documented exit code through the binary.
  const std::string bad = std::string(STEINCV_CLI_PATH) + " estimate --samples " + prefix +
                          "_samples.csv --grads " + prefix + "_grads.csv --integrands " + prefix +
                          "_integrands.csv --method bogus 2>/dev/null";
  const int status = std::system(bad.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == kExitParse);
}

TEST_CASE("method spec grammar accepts the documented forms", "[cli]") {
  const auto gen = generate_config("gaussian:d=2", "iid", 80, 61, "grammar");
  REQUIRE(cmd_generate(gen) == kExitOk);
  const Eigen::MatrixXd thetas = read_csv_matrix(gen.out_path + "_samples.csv");
  const Eigen::MatrixXd grads = read_csv_matrix(gen.out_path + "_grads.csv");
  const Eigen::MatrixXd f = read_csv_matrix(gen.out_path + "_integrands.csv");
  const SampleSet samples(thetas, grads);

  for (const std::string spec :
       {"do:k=5,rowfrac=0.8,qmax=3", "mo:k=5,qmax=3", "ens:k=4,qmax=3,qbase=1,jstar=5,select=srswor,weights=invvar",
        "rzv:q=2,penalty=lasso,lambda=0.25", "rzv:q=2,penalty=ridge,cv=5"}) {
    const Method method = parse_method_spec(spec);
    CHECK(method.id == spec);
    const Estimate est = method.fit(samples, f, 3);
    CHECK(est.values.allFinite());
  }

  CHECK_THROWS_AS(parse_method_spec("rzv:q=2,penalty=huber"), ParseError);
  CHECK_THROWS_AS(parse_method_spec("rzv:q=2,lambda=1,cv=10"), ParseError);
  CHECK_THROWS_AS(parse_method_spec("sa:k=notanumber"), ParseError);
  CHECK_THROWS_AS(parse_method_spec(":k=2"), ParseError);
  CHECK_THROWS_AS(parse_target_spec("cauchy:d=2"), ParseError);
  CHECK_THROWS_AS(parse_target_spec("gaussian:d=2,var=-1"), ParseError);
}

TEST_CASE("STEINCV_THREADS is the --threads fallback", "[cli]") {
  CHECK(resolve_threads(3) == 3);
  setenv("STEINCV_THREADS", "2", 1);
  CHECK(resolve_threads(0) == 2);
  unsetenv("STEINCV_THREADS");
  CHECK(resolve_threads(0) == 1);
}
