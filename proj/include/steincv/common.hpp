#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace steincv {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

/// OLS problem has more columns than rows, or a learner sees too few rows.
class IdentifiabilityError : public std::runtime_error {
 public:
  explicit IdentifiabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// A pivoted factorisation found columns that are numerically dependent.
class SingularDesignError : public std::runtime_error {
 public:
  SingularDesignError(const std::string& what, std::vector<Eigen::Index> columns)
      : std::runtime_error(what), columns_(std::move(columns)) {}

  const std::vector<Eigen::Index>& columns() const { return columns_; }

 private:
  std::vector<Eigen::Index> columns_;
};

/// An iterative solver hit its sweep cap before reaching tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, long iterations, double last_change)
      : std::runtime_error(what), iterations_(iterations), last_change_(last_change) {}

  long iterations() const { return iterations_; }
  double last_change() const { return last_change_; }

 private:
  long iterations_;
  double last_change_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) {
    std::ostringstream os;
    os << what << " contains non-finite entries";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace steincv
