#include "shiftbounds/linalg.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace shiftbounds {

Mat Mat::identity(int n) { return scaled_identity(n, 1.0); }

Mat Mat::scaled_identity(int n, double s) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = s;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

Vec add(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("add: size mismatch");
  Vec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

Vec sub(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sub: size mismatch");
  Vec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

Vec scaled(const Vec& a, double s) {
  Vec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
  return r;
}

void axpy(double a, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

Vec matvec(const Mat& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.cols)
    throw std::invalid_argument("matvec: dimension mismatch");
  Vec r(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const double* row = &m.data[static_cast<size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) s += row[j] * x[j];
    r[i] = s;
  }
  return r;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: dimension mismatch");
  Mat r(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

Mat transpose(const Mat& m) {
  Mat r(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) r(j, i) = m(i, j);
  return r;
}

double frobenius_norm(const Mat& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return std::sqrt(s);
}

bool is_symmetric(const Mat& m, double tol) {
  if (m.rows != m.cols) return false;
  for (int i = 0; i < m.rows; ++i)
    for (int j = i + 1; j < m.cols; ++j)
      if (std::fabs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

Mat sandwich(const Mat& a, const Mat& s) {
  return matmul(matmul(a, s), transpose(a));
}

Mat cholesky_psd(const Mat& m, double jitter) {
  if (m.rows != m.cols) throw std::invalid_argument("cholesky: matrix not square");
  const int n = m.rows;
  Mat l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = m(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        // `jitter` is a pivot tolerance: pivots within it of zero are treated
        // as exactly singular, so point-mass covariances stay noise-free
        if (s < -10.0 * jitter - 1e-14)
          throw std::invalid_argument("cholesky: matrix not PSD (pivot " + std::to_string(s) +
                                      ")");
        l(i, i) = s > jitter ? std::sqrt(s) : 0.0;
      } else {
        l(i, j) = l(j, j) > 0.0 ? s / l(j, j) : 0.0;
      }
    }
  }
  return l;
}

}  // namespace shiftbounds
