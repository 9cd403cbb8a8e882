#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shiftbounds/embedding_set.hpp"
#include "shiftbounds/linalg.hpp"

namespace shiftbounds {

struct KMeansResult {
  std::vector<Vec> centroids;
  std::vector<int> assignments;
  double inertia = 0.0;
  int iterations = 0;
};

/// Lloyd iterations from k-means++ seeding; ties go to the lowest centroid
/// index. Empty clusters are reseeded at the point farthest from its
/// centroid, at most five times.
KMeansResult kmeans(const std::vector<Vec>& points, int k, int max_iters, double tolerance,
                    std::uint64_t seed);

/// Minimum-cost assignment of min(n, m) row/column pairs. permutation[row]
/// is the matched column, or -1 when rows exceed columns and the row is
/// unmatched.
struct Alignment {
  std::vector<int> permutation;
  double cost = 0.0;
};

Alignment hungarian(const Mat& cost);

enum class AlignCost { mean_distance, label_overlap };

/// Scenario-2 pipeline: cluster the (unlabeled view of the) embeddings,
/// compute per-cluster pseudo-means, and match them to the downstream class
/// means with the Hungarian algorithm. The default cost is the Euclidean
/// distance between pseudo-mean and class mean; label_overlap uses the
/// negated label counts (needs a labeled set).
struct RecoveredMeans {
  std::map<std::string, Vec> means;
  Alignment alignment;
  KMeansResult clustering;
};

RecoveredMeans recover_pseudo_means(const EmbeddingSet& embeddings, int k,
                                    const std::map<std::string, Vec>& downstream_means,
                                    std::uint64_t seed,
                                    AlignCost cost = AlignCost::mean_distance);

/// Spearman rank correlation with midranks for ties; 0 when either sequence
/// is constant.
double spearman(const Vec& x, const Vec& y);

struct SweepEntry {
  std::string severity;
  double delta_hat = 0.0;
  double accuracy = 0.0;
};

/// Sorted severity table (ascending mean shift) plus the Spearman rank
/// correlation between shift and accuracy. Requires at least 3 entries.
struct CorrelationReport {
  double spearman = 0.0;
  std::vector<SweepEntry> table;
};

CorrelationReport shift_accuracy_table(std::vector<SweepEntry> entries);

}  // namespace shiftbounds
