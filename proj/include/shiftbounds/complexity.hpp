#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shiftbounds/encoder.hpp"
#include "shiftbounds/latent_model.hpp"
#include "shiftbounds/losses.hpp"

namespace shiftbounds {

/// Top eigenvalue of a symmetric PSD matrix by power iteration.
double spectral_norm(const Mat& m, double tolerance, int max_iters);

/// Per-class ingredients of the intra-class deviation s(f):
/// the top eigenvalue of the encoded class covariance and E||f(x)||.
struct ClassDeviation {
  double cov_spectral_norm = 0.0;
  Estimate mean_norm;
};

struct IntraClassStats {
  std::vector<ClassDeviation> per_class;
  double s_value = 0.0;
  double s_std_error = 0.0;
};

/// s(f) = E_{c~nu}[ sqrt(||Sigma(f,c)||_2) * E||f(x)|| ]. Covariance spectral
/// norms are exact (encoder-transformed Gaussian covariances); the norm
/// expectations are Monte Carlo.
IntraClassStats intra_class_deviation(const LatentModel& model, const LinearEncoder& encoder,
                                      long long draws, std::uint64_t seed);

/// Training set for the Rademacher computation: M tuples of k+2 input
/// vectors (anchor, positive, k negatives).
struct TupleDataset {
  int k = 1;
  std::vector<std::vector<Vec>> tuples;
};

TupleDataset draw_tuple_dataset(const LatentModel& model, int k, int sample_size,
                                std::uint64_t seed);

struct RademacherEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long long draws = 0;
  int sample_size = 0;
  int k = 1;
};

/// Empirical Rademacher complexity of the Frobenius-ball linear class on the
/// dataset. For each sign draw the supremum is exact:
/// sup_{||W||_F <= w} <sigma, f_|S> = w * ||M(sigma)||_F with
/// M(sigma) = sum over (tuple, slot) of sign-vector * input^T.
RademacherEstimate rademacher_linear(const TupleDataset& dataset, double frob_bound,
                                     int out_dim, long long draws, std::uint64_t seed);

/// Per-draw supremum matrix M(sigma) for one sign assignment; exposed so the
/// closed form can be cross-checked against explicit feasible encoders.
Mat rademacher_sup_matrix(const TupleDataset& dataset, int out_dim,
                          const std::vector<int>& signs);

struct GenBound {
  double value = 0.0;
  double confidence_delta = 0.0;
  std::map<std::string, double> constants;
};

/// Explicit-constant generalization gap:
///   (4*sqrt(3) * eta * R * sqrt(k) / M) * rad.mean
/// + 3B*sqrt(log(4/delta)/(2M)) + 3B*sqrt(log(2/delta)/(2M)).
/// The first term is the contraction chain (factor sqrt(2) from the
/// vector-contraction inequality times the sqrt(6k)R Lipschitz constant of
/// the margin map, times the classical 2 R_S/M), the middle term the
/// classical concentration term, the last the Hoeffding term for the
/// comparator.
GenBound gen_bound(const RademacherEstimate& rad, double r, double loss_bound,
                   double lipschitz_eta, double confidence_delta);

}  // namespace shiftbounds
