#pragma once

#include "shiftbounds/linalg.hpp"

namespace shiftbounds {

/// Linear representation map f(x) = Wx restricted to a Frobenius ball, or the
/// identity when the matrix is empty. This is the hypothesis class whose
/// Rademacher complexity has a closed per-draw supremum.
struct LinearEncoder {
  Mat matrix;              // empty => identity
  double frob_bound = 0.0; // 0 with empty matrix => identity

  static LinearEncoder identity() { return LinearEncoder{}; }
  static LinearEncoder linear(Mat w, double bound);

  bool is_identity() const { return matrix.empty(); }
  int out_dim(int in_dim) const { return is_identity() ? in_dim : matrix.rows; }

  Vec apply(const Vec& x) const { return is_identity() ? x : matvec(matrix, x); }

  /// Rescale onto the Frobenius ball if outside.
  void project_frobenius();

  /// sigma_max(W); 1 for the identity. Used for the norm cap on f(x).
  double operator_norm() const;
};

}  // namespace shiftbounds
