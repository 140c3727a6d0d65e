#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "steincv/common.hpp"

namespace steincv {

/// Exponent vector of one monomial theta^alpha = prod_i theta_i^alpha_i.
struct MultiIndex {
  std::vector<int> exponents;

  int dim() const { return static_cast<int>(exponents.size()); }

  /// Total order |alpha|.
  int order() const { return std::accumulate(exponents.begin(), exponents.end(), 0); }

  bool operator==(const MultiIndex&) const = default;
};

/// All monomials with 0 < |alpha| <= max_order in dim variables, graded-lex
/// ordered: the order-1 block first, then order 2, and so on; within a block
/// the first coordinate's exponent decreases first. The order <= q monomials
/// therefore form a contiguous prefix for every q <= max_order.
struct PolynomialBasis {
  int dim = 0;
  int max_order = 0;
  std::vector<MultiIndex> indices;

  Eigen::Index size() const { return static_cast<Eigen::Index>(indices.size()); }
};

/// C(n, k) with overflow checking; throws std::overflow_error rather than wrap.
inline std::uint64_t binomial_checked(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i is integral at every step.
    const std::uint64_t num = n - k + i;
    const std::uint64_t g = std::gcd(result, i);
    const std::uint64_t r = result / g;
    const std::uint64_t den = i / g;
    std::uint64_t prod = 0;
    if (__builtin_mul_overflow(r, num, &prod))
      throw std::overflow_error("binomial_checked: C(" + std::to_string(n) + "," +
                                std::to_string(k) + ") overflows 64 bits");
    result = prod / den;
  }
  return result;
}

/// Number of monomials of total order exactly q in d variables: C(d+q-1, q).
inline std::uint64_t count_exact_order(int d, int q) {
  require(d >= 1, "count_exact_order: d must be >= 1");
  require(q >= 1, "count_exact_order: q must be >= 1");
  return binomial_checked(static_cast<std::uint64_t>(d) + static_cast<std::uint64_t>(q) - 1,
                          static_cast<std::uint64_t>(q));
}

/// Number of monomials with 0 < |alpha| <= Q: C(Q+d, d) - 1.
inline std::uint64_t basis_size(int d, int Q) {
  require(d >= 1, "basis_size: d must be >= 1");
  require(Q >= 1, "basis_size: Q must be >= 1");
  return binomial_checked(static_cast<std::uint64_t>(Q) + static_cast<std::uint64_t>(d),
                          static_cast<std::uint64_t>(d)) -
         1;
}

namespace detail {

inline void emit_order_block(int dim, int position, int remaining, std::vector<int>& scratch,
                             std::vector<MultiIndex>& out) {
  if (position == dim - 1) {
    scratch[static_cast<std::size_t>(position)] = remaining;
    out.push_back(MultiIndex{scratch});
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    scratch[static_cast<std::size_t>(position)] = e;
    emit_order_block(dim, position + 1, remaining - e, scratch, out);
  }
}

}  // namespace detail

/// Enumerates the monomial basis of the Q-th order polynomial class.
inline PolynomialBasis enumerate_basis(int d, int Q) {
  require(d >= 1, "enumerate_basis: d must be >= 1");
  require(Q >= 1, "enumerate_basis: Q must be >= 1");
  const std::uint64_t expected = basis_size(d, Q);

  PolynomialBasis basis;
  basis.dim = d;
  basis.max_order = Q;
  basis.indices.reserve(static_cast<std::size_t>(expected));
  std::vector<int> scratch(static_cast<std::size_t>(d), 0);
  for (int q = 1; q <= Q; ++q) detail::emit_order_block(d, 0, q, scratch, basis.indices);

  if (basis.indices.size() != expected)
    throw std::logic_error("enumerate_basis: enumeration does not match C(Q+d,d)-1");
  return basis;
}

namespace detail {

/// x^n for small non-negative integer n; 0^0 = 1.
inline double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

/// Per-point table of powers theta_i^p for p = 0..max_order. Column i holds the
/// powers of coordinate i.
struct PowerTable {
  Eigen::MatrixXd pow;  // (max_order+1) x d

  PowerTable(const Eigen::Ref<const Eigen::RowVectorXd>& theta, int max_order)
      : pow(max_order + 1, theta.size()) {
    pow.row(0).setOnes();
    for (int p = 1; p <= max_order; ++p)
      pow.row(p) = pow.row(p - 1).cwiseProduct(theta);
  }
};

inline double monomial_value(const MultiIndex& alpha, const PowerTable& t) {
  double v = 1.0;
  for (int i = 0; i < alpha.dim(); ++i) v *= t.pow(alpha.exponents[static_cast<std::size_t>(i)], i);
  return v;
}

/// Product over i != skip of theta_i^alpha_i.
inline double monomial_value_excluding(const MultiIndex& alpha, const PowerTable& t, int skip) {
  double v = 1.0;
  for (int i = 0; i < alpha.dim(); ++i) {
    if (i == skip) continue;
    v *= t.pow(alpha.exponents[static_cast<std::size_t>(i)], i);
  }
  return v;
}

}  // namespace detail

/// theta^alpha with the convention 0^0 = 1.
inline double eval_monomial(const MultiIndex& alpha, const Eigen::Ref<const Eigen::VectorXd>& theta) {
  require(alpha.dim() == theta.size(), "eval_monomial: dimension mismatch");
  double v = 1.0;
  for (int i = 0; i < alpha.dim(); ++i)
    v *= detail::ipow(theta[i], alpha.exponents[static_cast<std::size_t>(i)]);
  return v;
}

/// Gradient of theta^alpha: component j is alpha_j * theta^(alpha - e_j).
inline Eigen::VectorXd monomial_grad(const MultiIndex& alpha,
                                     const Eigen::Ref<const Eigen::VectorXd>& theta) {
  require(alpha.dim() == theta.size(), "monomial_grad: dimension mismatch");
  const int d = alpha.dim();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < d; ++j) {
    const int aj = alpha.exponents[static_cast<std::size_t>(j)];
    if (aj == 0) continue;
    double v = static_cast<double>(aj) * detail::ipow(theta[j], aj - 1);
    for (int i = 0; i < d; ++i) {
      if (i == j) continue;
      v *= detail::ipow(theta[i], alpha.exponents[static_cast<std::size_t>(i)]);
    }
    g[j] = v;
  }
  return g;
}

/// Laplacian of theta^alpha: sum_j alpha_j (alpha_j - 1) theta^(alpha - 2 e_j).
inline double monomial_laplacian(const MultiIndex& alpha,
                                 const Eigen::Ref<const Eigen::VectorXd>& theta) {
  require(alpha.dim() == theta.size(), "monomial_laplacian: dimension mismatch");
  const int d = alpha.dim();
  double lap = 0.0;
  for (int j = 0; j < d; ++j) {
    const int aj = alpha.exponents[static_cast<std::size_t>(j)];
    if (aj < 2) continue;
    double v = static_cast<double>(aj) * static_cast<double>(aj - 1) * detail::ipow(theta[j], aj - 2);
    for (int i = 0; i < d; ++i) {
      if (i == j) continue;
      v *= detail::ipow(theta[i], alpha.exponents[static_cast<std::size_t>(i)]);
    }
    lap += v;
  }
  return lap;
}

}  // namespace steincv
