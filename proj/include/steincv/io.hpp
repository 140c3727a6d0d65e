#pragma once

#include <Eigen/Dense>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "steincv/common.hpp"
#include "steincv/eval.hpp"
#include "steincv/zvcv.hpp"

namespace steincv {

/// Read/parse failures carry this type so the CLI can map them to a stable
/// exit code distinct from validation errors.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline bool parse_double(const std::string& token, double& out) {
  const char* begin = token.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace detail

/// Reads a numeric CSV into a matrix. A single leading header row is detected
/// (any cell that does not parse as a number) and skipped.
inline Eigen::MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t cols = 0;
  bool first_data_line = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);

    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (!detail::parse_double(fields[i], row[i])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first_data_line) continue;  // header row
      throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric value");
    }
    if (first_data_line) {
      cols = row.size();
      first_data_line = false;
    } else if (row.size() != cols) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(cols) + " fields, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");

  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

/// Writes a matrix as CSV in full round-trip precision, with an optional
/// header row.
inline void write_csv_matrix(const std::string& path, const Eigen::Ref<const Eigen::MatrixXd>& m,
                             const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  if (!header.empty()) {
    require(static_cast<Eigen::Index>(header.size()) == m.cols(),
            "write_csv_matrix: header length != column count");
    for (std::size_t j = 0; j < header.size(); ++j)
      out << (j ? "," : "") << header[j];
    out << "\n";
  }
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace detail {

/// JSON has no literal for non-finite numbers; the sentinel becomes null and a
/// flag column records it.
inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline nlohmann::json json_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(json_number(v[i]));
  return arr;
}

}  // namespace detail

/// Estimate report payload (schemas/estimate_report.schema.json).
inline nlohmann::json estimate_report_json(const Estimate& est, Eigen::Index S, Eigen::Index d,
                                           std::uint64_t seed, double postprocess_seconds) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "estimate_report";
  j["method"] = est.method;
  j["seed"] = seed;
  j["input"] = {{"rows", S}, {"dim", d}, {"integrands", est.values.size()}};
  j["estimates"] = detail::json_vector(est.values);
  nlohmann::json diag;
  diag["basis_columns"] = est.basis_columns;
  diag["residual_variance"] = detail::json_vector(est.residual_variance);
  if (est.lambda.size() > 0) diag["lambda"] = detail::json_vector(est.lambda);
  if (est.learner_weights.size() > 0) {
    diag["learners"] = est.learner_weights.size();
    diag["learner_weights"] = detail::json_vector(est.learner_weights);
  }
  j["diagnostics"] = diag;
  j["timing"] = {{"postprocess_seconds", postprocess_seconds}};
  return j;
}

/// Benchmark report payload (schemas/benchmark_report.schema.json).
inline nlohmann::json benchmark_report_json(const EfficiencyReport& report) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "benchmark_report";
  j["reps"] = report.reps;
  j["seed"] = report.seed;
  j["cells"] = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    nlohmann::json c;
    c["target"] = cell.target;
    c["sample_size"] = cell.sample_size;
    c["truth"] = detail::json_vector(cell.truth);
    c["truth_source"] = cell.truth_source;
    c["mean_sampling_seconds"] = cell.mean_sampling_seconds;
    c["methods"] = nlohmann::json::array();
    for (const auto& m : cell.methods) {
      nlohmann::json mj;
      mj["method"] = m.method;
      mj["mse"] = detail::json_vector(m.mse);
      mj["se"] = detail::json_vector(m.se);
      mj["se_mean"] = detail::json_number(m.se_mean);
      mj["oe_mean"] = detail::json_number(m.oe_mean);
      mj["se_infinite"] = m.se_infinite;
      mj["reps_included"] = m.reps_included;
      mj["reps_failed"] = m.reps_failed;
      mj["mean_post_seconds"] = m.mean_post_seconds;
      c["methods"].push_back(mj);
    }
    j["cells"].push_back(c);
  }
  return j;
}

/// Quotes a CSV field when it contains a delimiter, quote or newline.
inline std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

/// Benchmark report as CSV: one row per (target, S, method). Infinite SE is
/// written as "inf"; timing columns sit last so they are easy to strip.
inline std::string benchmark_report_csv(const EfficiencyReport& report) {
  std::ostringstream out;
  out << "target,sample_size,method,reps_included,reps_failed,se_mean,oe_mean,se_infinite,"
         "mean_sampling_seconds,mean_post_seconds\n";
  char buf[40];
  const auto num = [&](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    if (std::isnan(v)) return std::string("nan");
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& cell : report.cells) {
    for (const auto& m : cell.methods) {
      out << csv_field(cell.target) << ',' << cell.sample_size << ',' << csv_field(m.method)
          << ',' << m.reps_included << ',' << m.reps_failed << ',' << num(m.se_mean) << ','
          << num(m.oe_mean) << ',' << (m.se_infinite ? 1 : 0) << ','
          << num(cell.mean_sampling_seconds) << ',' << num(m.mean_post_seconds) << "\n";
    }
  }
  return out.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace steincv
