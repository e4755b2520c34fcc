#pragma once

// Dense double-precision primitives shared by every other module: vector
// norms, cosine similarity, batched similarity matrices and a shifted
// log-sum-exp. Everything here is a pure function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fnc/error.hpp"

namespace fnc {

using Vec = std::vector<double>;

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline Vec l2_normalize(std::span<const double> v) {
  require(!v.empty(), ErrorKind::shape, "l2_normalize: empty vector");
  const double n = norm(v);
  require(n > 0.0 && std::isfinite(n), ErrorKind::degenerate_input,
          "l2_normalize: vector has zero (or non-finite) norm");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

inline double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    fail(ErrorKind::shape,
         "cosine_sim: dimension mismatch " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  const double nu = norm(u);
  const double nv = norm(v);
  require(nu > 0.0 && nv > 0.0, ErrorKind::degenerate_input, "cosine_sim: zero-norm input");
  return dot(u, v) / (nu * nv);
}

/// Entry (i, j) is cosine_sim(a[i], b[j]), evaluated in exactly the same
/// order as the scalar routine.
inline Matrix sim_matrix(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  Matrix out(a.size(), b.size());
  if (a.empty() || b.empty()) return out;
  const std::size_t d = a.front().size();
  for (const auto& v : a)
    require(v.size() == d, ErrorKind::shape, "sim_matrix: ragged left operand");
  for (const auto& v : b)
    require(v.size() == d, ErrorKind::shape, "sim_matrix: dimension mismatch between operands");
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out(i, j) = cosine_sim(a[i], b[j]);
  return out;
}

inline double log_sum_exp(std::span<const double> xs) {
  require(!xs.empty(), ErrorKind::shape, "log_sum_exp: empty input");
  const double hi = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

inline bool is_unit(std::span<const double> v, double tol = 1e-9) {
  return std::abs(norm(v) - 1.0) <= tol;
}

}  // namespace fnc
