#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace shiftbounds {

using Vec = std::vector<double>;

/// Dense row-major matrix. Dimensions here are small (embedding spaces of a
/// few dozen coordinates), so no attempt is made at blocking or SIMD.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  static Mat identity(int n);
  static Mat scaled_identity(int n, double s);
  bool empty() const { return rows == 0 || cols == 0; }
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_norm(std::span<const double> a);
Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec scaled(const Vec& a, double s);
void axpy(double a, const Vec& x, Vec& y);  // y += a*x

Vec matvec(const Mat& m, const Vec& x);
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& m);
double frobenius_norm(const Mat& m);
bool is_symmetric(const Mat& m, double tol);

/// A * S * A^T for symmetric S; used to push class covariances through a
/// linear encoder.
Mat sandwich(const Mat& a, const Mat& s);

/// Lower-triangular Cholesky factor of a symmetric PSD matrix, adding
/// `jitter` to the diagonal. Throws std::invalid_argument if the matrix is
/// not PSD within the jitter budget.
Mat cholesky_psd(const Mat& m, double jitter);

}  // namespace shiftbounds
