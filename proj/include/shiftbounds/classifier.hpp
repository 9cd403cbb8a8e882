#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shiftbounds/embedding_set.hpp"
#include "shiftbounds/encoder.hpp"
#include "shiftbounds/latent_model.hpp"
#include "shiftbounds/losses.hpp"

namespace shiftbounds {

/// Downstream task: an ordered set of distinct class indices with a label
/// distribution over them (uniform unless overridden).
struct Task {
  std::vector<int> class_indices;
  Vec label_dist;
};

Task make_task(std::vector<int> class_indices, Vec label_dist = {});

/// Mean classifier: one row per class, each row a class-mean embedding.
struct MeanClassifier {
  std::vector<std::string> classes;
  std::vector<Vec> rows;
};

/// Exact encoded class means of a model (the Gaussian means pushed through
/// the encoder), indexed by class.
std::vector<Vec> model_class_means(const LatentModel& model, const LinearEncoder& encoder);

/// argmax_c <row_c, z>, ties broken toward the lowest row index.
int mean_classify(const MeanClassifier& clf, const Vec& z);

/// Fraction of rows whose label matches the classifier's argmax row.
/// Throws if a row label is outside the classifier's class set.
double accuracy_mean(const EmbeddingSet& dataset, const MeanClassifier& clf);

/// Supervised loss of the mean classifier on a task, estimated by Monte
/// Carlo: draw c ~ label_dist, x ~ D_c (pretraining class-conditional), and
/// score the (|T|-1)-way margin loss of the rows in `means`.
Estimate sup_loss_mean(const LatentModel& model, const LinearEncoder& encoder,
                       const Task& task, const std::vector<Vec>& means,
                       const MarginLossKind& kind, long long draws, std::uint64_t seed);

/// Exhaustive evaluation of the same loss over an embedding set: rows are
/// grouped by label and classes weighted by label_dist.
double sup_loss_mean(const EmbeddingSet& dataset, const std::vector<std::string>& task_labels,
                     const Vec& label_dist, const std::map<std::string, Vec>& means,
                     const MarginLossKind& kind);

/// Task sampled together with the anchor class that generated it.
struct SampledTask {
  Task task;
  int anchor_class = 0;
};

/// k+1 distinct classes via rejection from rho^{k+1}; uniform label_dist.
SampledTask sample_task_distinct(const ClassPrior& prior, int k, CounterRng& rng);

/// Task distribution D of the k-negative bound: a tuple from rho^{k+1}
/// conditioned on no negative colliding with the anchor; the task is its set
/// of distinct classes (possibly fewer than k+1).
SampledTask sample_task_D(const ClassPrior& prior, int k, CounterRng& rng);

/// Exact reweighting constants of the k-negative bound for one task:
/// rho_min_plus = min_{c in T} P[c+ = c | Q = T, I+ = empty], and the largest
/// task-label probability p_max. Computed by exact tuple enumeration.
struct TaskWeights {
  double rho_min_plus = 0.0;
  double p_max = 0.0;
};

TaskWeights task_weights(const ClassPrior& prior, int k, const Task& task);

}  // namespace shiftbounds
