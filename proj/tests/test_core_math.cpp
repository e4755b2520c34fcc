#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fnc/core_math.hpp"

using namespace fnc;
using Catch::Approx;

namespace {

Vec random_vec(std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec v(d);
  do {
    for (double& x : v) x = u(rng);
  } while (norm(v) == 0.0);
  return v;
}

}  // namespace

TEST_CASE("l2_normalize known values", "[core_math]") {
  const Vec a = l2_normalize(Vec{3.0, 4.0});
  CHECK(a[0] == Approx(0.6).margin(1e-15));
  CHECK(a[1] == Approx(0.8).margin(1e-15));

  const Vec b = l2_normalize(Vec{1.0, 0.0});
  CHECK(b == Vec{1.0, 0.0});

  try {
    l2_normalize(Vec{0.0, 0.0});
    FAIL("zero vector accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_input);
  }
}

TEST_CASE("cosine_sim known values", "[core_math]") {
  const Vec u{0.3, -1.2, 2.0};
  CHECK(cosine_sim(u, u) == Approx(1.0).margin(1e-15));
  CHECK(cosine_sim(Vec{1, 0}, Vec{0, 1}) == 0.0);
  CHECK(cosine_sim(Vec{1, 0}, Vec{-1, 0}) == -1.0);
  CHECK_THROWS_AS(cosine_sim(Vec{0, 0}, Vec{1, 0}), Error);
  CHECK_THROWS_AS(cosine_sim(Vec{1, 0, 0}, Vec{1, 0}), Error);
}

TEST_CASE("cosine_sim properties", "[core_math][property]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + trial % 16;
    const Vec u = random_vec(d, rng), v = random_vec(d, rng);
    const double c = cosine_sim(u, v);
    CHECK(c == cosine_sim(v, u));
    CHECK(c >= -1.0 - 1e-9);
    CHECK(c <= 1.0 + 1e-9);
    Vec su = u;
    const double a = scale(rng);
    for (double& x : su) x *= a;
    CHECK(cosine_sim(su, v) == Approx(c).margin(1e-14));

    const Vec n1 = l2_normalize(u);
    const Vec n2 = l2_normalize(n1);
    for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(n1[k] - n2[k]) <= 1e-15);
  }
}

TEST_CASE("sim_matrix", "[core_math]") {
  const std::vector<Vec> e{{1, 0}, {0, 1}};
  const Matrix m = sim_matrix(e, e);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 1) == 0.0);
  CHECK(m(1, 0) == 0.0);
  CHECK(m(1, 1) == 1.0);

  const Matrix r = sim_matrix({{1, 0}}, {{1, 0}, {-1, 0}});
  REQUIRE(r.rows == 1);
  REQUIRE(r.cols == 2);
  CHECK(r(0, 0) == 1.0);
  CHECK(r(0, 1) == -1.0);

  std::mt19937_64 rng(5);
  std::vector<Vec> a, b;
  for (int i = 0; i < 5; ++i) a.push_back(random_vec(6, rng));
  for (int j = 0; j < 7; ++j) b.push_back(random_vec(6, rng));
  const Matrix s = sim_matrix(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) CHECK(s(i, j) == cosine_sim(a[i], b[j]));

  // normalized set: unit diagonal
  std::vector<Vec> unit;
  for (const auto& v : a) unit.push_back(l2_normalize(v));
  const Matrix self = sim_matrix(unit, unit);
  for (std::size_t i = 0; i < unit.size(); ++i) CHECK(self(i, i) == Approx(1.0).margin(1e-15));

  CHECK_THROWS_AS(sim_matrix({{1, 0}}, {{1, 0, 0}}), Error);
}

TEST_CASE("log_sum_exp", "[core_math]") {
  CHECK(log_sum_exp(Vec{0.0, 0.0}) == Approx(std::log(2.0)).margin(1e-15));
  CHECK(log_sum_exp(Vec{1000.0, 1000.0}) == Approx(1000.0 + std::log(2.0)).margin(1e-12));
  CHECK(std::isfinite(log_sum_exp(Vec{1e4, -1e4, 1e4})));
  CHECK_THROWS_AS(log_sum_exp(Vec{}), Error);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vec xs(10);
    for (double& x : xs) x = u(rng);
    double naive = 0.0;
    for (double x : xs) naive += std::exp(x);
    CHECK(std::abs(log_sum_exp(xs) - std::log(naive)) < 1e-12);

    const double c = shift(rng);
    Vec moved = xs;
    for (double& x : moved) x += c;
    CHECK(std::abs(log_sum_exp(moved) - (log_sum_exp(xs) + c)) < 1e-12);
  }
}
