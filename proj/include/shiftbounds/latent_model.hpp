#pragma once

#include <cstdint>
#include <vector>

#include "shiftbounds/linalg.hpp"
#include "shiftbounds/rng.hpp"

namespace shiftbounds {

/// Distribution over latent classes. Entries are validated to be nonnegative
/// and to sum to one within 1e-12; at least two classes are required.
class ClassPrior {
 public:
  explicit ClassPrior(Vec probabilities);

  int num_classes() const { return static_cast<int>(p_.size()); }
  double prob(int c) const { return p_[static_cast<size_t>(c)]; }
  const Vec& probs() const { return p_; }

  int sample(CounterRng& rng) const;

 private:
  Vec p_;
  Vec cdf_;
};

/// Per-class embedding distribution: Gaussian with the given mean and
/// covariance (a zero covariance is a point mass).
struct ClassDistribution {
  Vec mean;
  Mat covariance;
};

/// Latent-class generative model: class prior, per-class Gaussian embedding
/// distributions, and a hard norm bound R enforced on every emitted sample by
/// rejection. Immutable after construction; safe to share across workers.
class LatentModel {
 public:
  LatentModel(ClassPrior prior, std::vector<ClassDistribution> classes,
              double norm_bound);

  const ClassPrior& prior() const { return prior_; }
  int num_classes() const { return prior_.num_classes(); }
  int dimension() const { return dim_; }
  double norm_bound() const { return norm_bound_; }
  const ClassDistribution& class_dist(int c) const { return classes_[static_cast<size_t>(c)]; }

  /// One draw from class c, redrawn while ||z|| > norm_bound. Throws
  /// std::runtime_error once the acceptance rate of a batch falls below 1%.
  Vec sample_point(int c, CounterRng& rng) const;

 private:
  ClassPrior prior_;
  std::vector<ClassDistribution> classes_;
  std::vector<Mat> chol_;  // cached factors, jitter 1e-10
  int dim_ = 0;
  double norm_bound_ = 0.0;
};

/// One contrastive draw: anchor/positive from the same class, k negatives
/// from the marginal, plus the collision bookkeeping the k-negative bound
/// needs (I+ = colliding indices, Q = distinct classes).
struct ContrastiveTuple {
  Vec anchor;
  Vec positive;
  std::vector<Vec> negatives;
  int anchor_class = 0;
  std::vector<int> negative_classes;
  std::vector<int> collision_indices;  // sorted
  std::vector<int> distinct_classes;   // sorted
};

ContrastiveTuple sample_tuple(const LatentModel& model, int k, CounterRng& rng);
ContrastiveTuple sample_tuple(const LatentModel& model, int k, std::uint64_t seed);

/// tau: probability two independent class draws coincide (sum of squared
/// prior entries).
double collision_prob(const ClassPrior& prior);

/// tau_k = 1 - sum_c rho(c)(1-rho(c))^k: probability at least one of k
/// negatives collides with the anchor class. Equals tau at k=1.
double collision_prob_k(const ClassPrior& prior, int k);

/// tau_0 = sum_c rho(c)^{k+1}: probability every negative collides.
double all_collide_prob(const ClassPrior& prior, int k);

/// nu(c) proportional to rho(c)^2.
ClassPrior nu_distribution(const ClassPrior& prior);

/// u(c) proportional to rho(c)(1-(1-rho(c))^k); coincides with nu at k=1.
ClassPrior u_distribution(const ClassPrior& prior, int k);

/// Exact enumeration of all C^{k+1} class tuples with their probabilities and
/// collision bookkeeping. Oracle for every closed-form tau quantity and for
/// the task-weight conditionals. Requires C^{k+1} <= 1e6.
struct ClassTupleInfo {
  std::vector<int> classes;  // anchor class first, then the k negatives
  double probability = 0.0;
  std::vector<int> collision_indices;
  std::vector<int> distinct_classes;
};

std::vector<ClassTupleInfo> enumerate_tuples(const ClassPrior& prior, int k);

}  // namespace shiftbounds
