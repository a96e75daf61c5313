#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cepn/error.hpp"

namespace cepn {

// Dense symmetric positive-definite solves for the Cox information matrix
// (p stays small, so plain Cholesky is plenty).

// Lower-triangular Cholesky factor of the n x n row-major matrix a.
// Throws numeric_error with a rough condition estimate when a pivot fails.
inline std::vector<double> cholesky(const std::vector<double>& a, std::size_t n,
                                    const char* who) {
  std::vector<double> l(n * n, 0.0);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a[i * n + i]));
  const double tiny = std::max(max_diag, 1.0) * 1e-12;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (!(d > tiny))
      throw numeric_error(std::string(who) + ": matrix singular at pivot " +
                          std::to_string(j) + " (pivot " + std::to_string(d) +
                          ", condition >= " +
                          std::to_string(max_diag / std::max(std::abs(d), 1e-300)) + ")");
    l[j * n + j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / l[j * n + j];
    }
  }
  return l;
}

inline std::vector<double> cholesky_solve(const std::vector<double>& l, std::size_t n,
                                          const std::vector<double>& b) {
  std::vector<double> y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * y[k];
    y[i] = s / l[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l[k * n + i] * x[k];
    x[i] = s / l[i * n + i];
  }
  return x;
}

// Full inverse from the Cholesky factor (column-by-column solves).
inline std::vector<double> cholesky_inverse(const std::vector<double>& l, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e.assign(n, 0.0);
    e[j] = 1.0;
    auto col = cholesky_solve(l, n, e);
    for (std::size_t i = 0; i < n; ++i) inv[i * n + j] = col[i];
  }
  return inv;
}

// Two-sided normal tail: P(|Z| > |z|).
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

// Chi-square upper tail with 1 degree of freedom.
inline double chi2_1df_p(double chi2) {
  if (chi2 <= 0.0) return 1.0;
  return std::erfc(std::sqrt(chi2 / 2.0));
}

}  // namespace cepn
