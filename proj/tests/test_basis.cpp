#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "steincv/basis.hpp"
#include "steincv/rng.hpp"

using namespace steincv;

namespace {

// Independent oracle: monomial evaluation via std::pow, no shared code with
// eval_monomial.
double naive_monomial(const MultiIndex& alpha, const Eigen::VectorXd& theta) {
  double v = 1.0;
  for (int i = 0; i < alpha.dim(); ++i) {
    const int e = alpha.exponents[static_cast<std::size_t>(i)];
    if (e > 0) v *= std::pow(theta[i], e);
  }
  return v;
}

Eigen::VectorXd random_point(RngStream& rng, int d) {
  Eigen::VectorXd theta(d);
  for (int i = 0; i < d; ++i) theta[i] = -2.0 + 4.0 * rng.uniform01();
  return theta;
}

MultiIndex random_index(RngStream& rng, int d, int max_order) {
  MultiIndex alpha;
  alpha.exponents.assign(static_cast<std::size_t>(d), 0);
  const int order = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(max_order)));
  for (int o = 0; o < order; ++o)
    ++alpha.exponents[rng.uniform_below(static_cast<std::uint64_t>(d))];
  return alpha;
}

}  // namespace

TEST_CASE("count_exact_order reproduces the monomial count table", "[basis]") {
  // d = 5 and d = 15 rows, q = 1..5.
  const std::uint64_t d5[] = {5, 15, 35, 70, 126};
  const std::uint64_t d15[] = {15, 120, 680, 3060, 11628};
  for (int q = 1; q <= 5; ++q) {
    CHECK(count_exact_order(5, q) == d5[q - 1]);
    CHECK(count_exact_order(15, q) == d15[q - 1]);
  }
  CHECK(count_exact_order(5, 2) == 15);
  CHECK(count_exact_order(15, 3) == 680);
  for (int d = 1; d <= 20; ++d) CHECK(count_exact_order(d, 1) == static_cast<std::uint64_t>(d));
}

TEST_CASE("count_exact_order validates input and detects overflow", "[basis]") {
  CHECK_THROWS_AS(count_exact_order(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(count_exact_order(1, 0), std::invalid_argument);
  CHECK_THROWS_AS(binomial_checked(200, 100), std::overflow_error);
  CHECK(binomial_checked(20, 10) == 184756);
  CHECK(binomial_checked(4, 2) == 6);
  CHECK(binomial_checked(2, 5) == 0);
}

TEST_CASE("enumerate_basis: counts, ordering, determinism", "[basis]") {
  SECTION("d=2 Q=2 exact sequence") {
    const PolynomialBasis basis = enumerate_basis(2, 2);
    REQUIRE(basis.size() == 5);
    CHECK(basis.indices[0].exponents == std::vector<int>{1, 0});
    CHECK(basis.indices[1].exponents == std::vector<int>{0, 1});
    CHECK(basis.indices[2].exponents == std::vector<int>{2, 0});
    CHECK(basis.indices[3].exponents == std::vector<int>{1, 1});
    CHECK(basis.indices[4].exponents == std::vector<int>{0, 2});
  }
  SECTION("d=1 Q=1") {
    const PolynomialBasis basis = enumerate_basis(1, 1);
    REQUIRE(basis.size() == 1);
    CHECK(basis.indices[0].exponents == std::vector<int>{1});
  }
  SECTION("d=5 Q=5 count and per-order block sizes") {
    const PolynomialBasis basis = enumerate_basis(5, 5);
    REQUIRE(basis.size() == 251);
    std::array<int, 6> per_order{};
    for (const auto& alpha : basis.indices) ++per_order[static_cast<std::size_t>(alpha.order())];
    CHECK(per_order[1] == 5);
    CHECK(per_order[2] == 15);
    CHECK(per_order[3] == 35);
    CHECK(per_order[4] == 70);
    CHECK(per_order[5] == 126);
  }
  SECTION("rejects empty bases") {
    CHECK_THROWS_AS(enumerate_basis(0, 2), std::invalid_argument);
    CHECK_THROWS_AS(enumerate_basis(2, 0), std::invalid_argument);
  }
  SECTION("deterministic") {
    const PolynomialBasis a = enumerate_basis(3, 4);
    const PolynomialBasis b = enumerate_basis(3, 4);
    REQUIRE(a.indices.size() == b.indices.size());
    for (std::size_t i = 0; i < a.indices.size(); ++i) CHECK(a.indices[i] == b.indices[i]);
  }
}

TEST_CASE("basis size equals the sum of exact-order counts up to d=15, Q=5", "[basis]") {
  for (int d = 1; d <= 15; ++d) {
    for (int Q = 1; Q <= 5; ++Q) {
      std::uint64_t total = 0;
      for (int q = 1; q <= Q; ++q) total += count_exact_order(d, q);
      CHECK(total == basis_size(d, Q));
      CHECK(basis_size(d, Q) ==
            binomial_checked(static_cast<std::uint64_t>(Q + d), static_cast<std::uint64_t>(d)) - 1);
      if (static_cast<std::uint64_t>(d) * Q <= 40)  // keep enumeration cheap
        CHECK(enumerate_basis(d, Q).size() == static_cast<Eigen::Index>(basis_size(d, Q)));
    }
  }
}

TEST_CASE("lower-order bases are prefixes of higher-order ones", "[basis]") {
  for (int d : {1, 2, 4, 7}) {
    for (int Q = 2; Q <= 4; ++Q) {
      const PolynomialBasis lo = enumerate_basis(d, Q - 1);
      const PolynomialBasis hi = enumerate_basis(d, Q);
      REQUIRE(lo.size() <= hi.size());
      for (Eigen::Index i = 0; i < lo.size(); ++i)
        CHECK(lo.indices[static_cast<std::size_t>(i)] == hi.indices[static_cast<std::size_t>(i)]);
    }
  }
}

TEST_CASE("eval_monomial pinned values", "[basis]") {
  CHECK(eval_monomial({{2, 1}}, Eigen::Vector2d(3, 2)) == 18.0);
  CHECK(eval_monomial({{1}}, Eigen::VectorXd::Zero(1)) == 0.0);
  CHECK(eval_monomial({{0, 3}}, Eigen::Vector2d(5, -2)) == -8.0);
  // 0^0 = 1: the zero-exponent coordinate contributes a factor 1 even at 0.
  CHECK(eval_monomial({{0, 2}}, Eigen::Vector2d(0, 3)) == 9.0);
  CHECK_THROWS_AS(eval_monomial({{1, 2}}, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("monomial_grad pinned values", "[basis]") {
  const Eigen::VectorXd g1 = monomial_grad({{2}}, Eigen::VectorXd::Constant(1, 3.0));
  CHECK(g1[0] == 6.0);
  const Eigen::VectorXd g2 = monomial_grad({{1, 1}}, Eigen::Vector2d(2, 3));
  CHECK(g2[0] == 3.0);
  CHECK(g2[1] == 2.0);
  const Eigen::VectorXd g3 = monomial_grad({{0, 2}}, Eigen::Vector2d(7, 5));
  CHECK(g3[0] == 0.0);  // zero exponent => zero component
  CHECK(g3[1] == 10.0);
  CHECK_THROWS_AS(monomial_grad({{1}}, Eigen::Vector2d(1, 2)), std::invalid_argument);
}

TEST_CASE("monomial_laplacian pinned values", "[basis]") {
  CHECK(monomial_laplacian({{2}}, Eigen::VectorXd::Constant(1, 123.0)) == 2.0);
  CHECK(monomial_laplacian({{1, 1}}, Eigen::Vector2d(2, 3)) == 0.0);
  // alpha=(3,2) at (2,1): 3*2*2*1 + 2*1*8 = 28, cross-checked by the
  // finite-difference property below.
  CHECK(monomial_laplacian({{3, 2}}, Eigen::Vector2d(2, 1)) == 28.0);
  CHECK_THROWS_AS(monomial_laplacian({{1}}, Eigen::Vector2d(1, 2)), std::invalid_argument);
}

TEST_CASE("monomial_grad matches central finite differences", "[basis]") {
  RngStream rng(20240901);
  const double h = 1e-5;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_below(4));
    const MultiIndex alpha = random_index(rng, d, 5);
    const Eigen::VectorXd theta = random_point(rng, d);
    const Eigen::VectorXd grad = monomial_grad(alpha, theta);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd up = theta, dn = theta;
      up[j] += h;
      dn[j] -= h;
      const double fd = (naive_monomial(alpha, up) - naive_monomial(alpha, dn)) / (2.0 * h);
      CHECK(std::abs(fd - grad[j]) <= 1e-6 * std::max(1.0, std::abs(grad[j])));
    }
  }
}

TEST_CASE("monomial_laplacian matches the finite-difference Hessian trace", "[basis]") {
  RngStream rng(77001);
  const double h = 1e-4;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_below(4));
    const MultiIndex alpha = random_index(rng, d, 5);
    const Eigen::VectorXd theta = random_point(rng, d);
    double trace = 0.0;
    const double f0 = naive_monomial(alpha, theta);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd up = theta, dn = theta;
      up[j] += h;
      dn[j] -= h;
      trace += (naive_monomial(alpha, up) - 2.0 * f0 + naive_monomial(alpha, dn)) / (h * h);
    }
    const double lap = monomial_laplacian(alpha, theta);
    CHECK(std::abs(trace - lap) <= 1e-5 * std::max(1.0, std::abs(lap)));
  }
}
