#include "fimvar/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace fimvar {

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

Vec mat_vec(const Mat& m, const Vec& v) {
  if (v.size() != m.cols) throw std::invalid_argument("mat_vec: dimension mismatch");
  Vec out(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const double* row = &m.data[i * m.cols];
    for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * v[j];
    out[i] = s;
  }
  return out;
}

double quadratic_form(const Mat& m, const Vec& v) {
  if (m.rows != m.cols || v.size() != m.cols)
    throw std::invalid_argument("quadratic_form: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = &m.data[i * m.cols];
    double ri = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) ri += row[j] * v[j];
    s += v[i] * ri;
  }
  return s;
}

double frobenius_norm(const Mat& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return std::sqrt(s);
}

double trace(const Mat& m) {
  if (m.rows != m.cols) throw std::invalid_argument("trace: matrix not square");
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) s += m(i, i);
  return s;
}

Mat outer(const Vec& a, const Vec& b) {
  Mat m(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
  return m;
}

Mat gram(const Mat& m) {
  Mat g(m.cols, m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = &m.data[i * m.cols];
    for (std::size_t a = 0; a < m.cols; ++a) {
      const double ra = row[a];
      if (ra == 0.0) continue;
      for (std::size_t b = 0; b < m.cols; ++b) g(a, b) += ra * row[b];
    }
  }
  return g;
}

namespace {

double off_diagonal_norm(const Mat& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

std::vector<double> sym_eigenvalues(const Mat& m) {
  if (m.rows != m.cols) throw std::invalid_argument("sym_eigenvalues: matrix not square");
  const std::size_t n = m.rows;
  if (n == 0) throw std::invalid_argument("sym_eigenvalues: empty matrix");

  double max_abs = 0.0;
  for (double v : m.data) max_abs = std::max(max_abs, std::abs(v));
  const double asym_tol = 1e-10 * std::max(1.0, max_abs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > asym_tol)
        throw std::domain_error("sym_eigenvalues: matrix is not symmetric");

  // Work on the symmetrized copy so tiny input asymmetry cannot drift.
  Mat a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (m(i, j) + m(j, i));

  if (n == 1) return {a(0, 0)};

  const double frob = std::max(frobenius_norm(a), 1e-300);
  const double stop = 1e-12 * frob;
  const int max_sweeps = 100;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_diagonal_norm(a) <= stop) break;
    for (std::size_t p = 0; p < n - 1; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        // Smaller-magnitude root keeps the rotation angle <= pi/4.
        const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                      : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }

  std::vector<double> eigs(n);
  for (std::size_t i = 0; i < n; ++i) eigs[i] = a(i, i);
  std::sort(eigs.begin(), eigs.end(), std::greater<double>());
  return eigs;
}

std::pair<double, double> sym_eig_extremes(const Mat& m) {
  const auto eigs = sym_eigenvalues(m);
  return {eigs.back(), eigs.front()};
}

}  // namespace fimvar
