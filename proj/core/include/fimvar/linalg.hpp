#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace fimvar {

using Vec = std::vector<double>;

/// Dense row-major matrix. Small sizes only; everything here is O(n^3) at
/// worst and meant for head dimensions T <= 32 (T^2 after reshaping).
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
Vec mat_vec(const Mat& m, const Vec& v);

/// v^T m v for square m.
double quadratic_form(const Mat& m, const Vec& v);

double frobenius_norm(const Mat& m);
double trace(const Mat& m);

/// a b^T.
Mat outer(const Vec& a, const Vec& b);

/// m^T m, the (cols x cols) Gram matrix.
Mat gram(const Mat& m);

/// All eigenvalues of a symmetric matrix, sorted descending, computed by
/// cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
/// 1e-12 relative to the matrix norm. Throws std::domain_error if the input
/// deviates from symmetry by more than 1e-10 (absolute, scaled by max entry).
std::vector<double> sym_eigenvalues(const Mat& m);

/// (lambda_min, lambda_max) of a symmetric matrix.
std::pair<double, double> sym_eig_extremes(const Mat& m);

}  // namespace fimvar
