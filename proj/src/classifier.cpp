#include "shiftbounds/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace shiftbounds {

namespace {
constexpr long long kChunk = 16384;
}

std::map<std::string, Vec> empirical_class_means(const EmbeddingSet& set) {
  if (set.rows.empty()) throw std::invalid_argument("class_means: empty embedding set");
  std::map<std::string, Vec> sums;
  std::map<std::string, long long> counts;
  for (const auto& row : set.rows) {
    auto [it, fresh] = sums.try_emplace(row.label, Vec(row.vector.size(), 0.0));
    axpy(1.0, row.vector, it->second);
    ++counts[row.label];
  }
  for (auto& [label, sum] : sums)
    for (double& v : sum) v /= static_cast<double>(counts[label]);
  return sums;
}

Task make_task(std::vector<int> class_indices, Vec label_dist) {
  if (class_indices.size() < 2) throw std::invalid_argument("task: need at least 2 classes");
  std::set<int> distinct(class_indices.begin(), class_indices.end());
  if (distinct.size() != class_indices.size())
    throw std::invalid_argument("task: class indices must be distinct");
  if (label_dist.empty())
    label_dist.assign(class_indices.size(), 1.0 / static_cast<double>(class_indices.size()));
  if (label_dist.size() != class_indices.size())
    throw std::invalid_argument("task: label_dist length mismatch");
  double sum = 0.0;
  for (double v : label_dist) {
    if (v < 0.0) throw std::invalid_argument("task: negative label probability");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("task: label_dist must sum to 1");
  return Task{std::move(class_indices), std::move(label_dist)};
}

std::vector<Vec> model_class_means(const LatentModel& model, const LinearEncoder& encoder) {
  std::vector<Vec> means;
  means.reserve(static_cast<size_t>(model.num_classes()));
  for (int c = 0; c < model.num_classes(); ++c)
    means.push_back(encoder.apply(model.class_dist(c).mean));
  return means;
}

int mean_classify(const MeanClassifier& clf, const Vec& z) {
  if (clf.rows.empty()) throw std::invalid_argument("mean_classify: empty classifier");
  int best = 0;
  double best_score = dot(clf.rows[0], z);
  for (size_t i = 1; i < clf.rows.size(); ++i) {
    const double s = dot(clf.rows[i], z);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double accuracy_mean(const EmbeddingSet& dataset, const MeanClassifier& clf) {
  if (dataset.rows.empty()) throw std::invalid_argument("accuracy_mean: empty dataset");
  std::set<std::string> known(clf.classes.begin(), clf.classes.end());
  long long correct = 0;
  for (const auto& row : dataset.rows) {
    if (!known.count(row.label))
      throw std::invalid_argument("accuracy_mean: label '" + row.label +
                                  "' outside the classifier's class set");
    if (clf.classes[static_cast<size_t>(mean_classify(clf, row.vector))] == row.label)
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.rows.size());
}

namespace {

double margins_loss(const Vec& fx, const std::vector<const Vec*>& rows, size_t own,
                    const MarginLossKind& kind) {
  Vec margins;
  margins.reserve(rows.size() - 1);
  const double own_score = dot(*rows[own], fx);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (i == own) continue;
    margins.push_back(own_score - dot(*rows[i], fx));
  }
  MarginLossKind km = kind;
  km.ways = static_cast<int>(margins.size());
  return margin_loss(km, margins);
}

int sample_categorical(const Vec& probs, CounterRng& rng) {
  const double u = rng.next_uniform();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

Estimate sup_loss_mean(const LatentModel& model, const LinearEncoder& encoder,
                       const Task& task, const std::vector<Vec>& means,
                       const MarginLossKind& kind, long long draws, std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("sup_loss_mean: draws must be positive");
  std::vector<const Vec*> rows;
  rows.reserve(task.class_indices.size());
  for (int c : task.class_indices) {
    if (c < 0 || c >= static_cast<int>(means.size()))
      throw std::invalid_argument("sup_loss_mean: missing mean for class " + std::to_string(c));
    rows.push_back(&means[static_cast<size_t>(c)]);
  }
  RunningStat stat;
  const long long chunks = (draws + kChunk - 1) / kChunk;
  for (long long ci = 0; ci < chunks; ++ci) {
    CounterRng rng = CounterRng::derive(seed, static_cast<std::uint64_t>(ci));
    RunningStat local;
    const long long n = std::min(kChunk, draws - ci * kChunk);
    for (long long i = 0; i < n; ++i) {
      const int slot = sample_categorical(task.label_dist, rng);
      const int c = task.class_indices[static_cast<size_t>(slot)];
      const Vec fx = encoder.apply(model.sample_point(c, rng));
      local.add(margins_loss(fx, rows, static_cast<size_t>(slot), kind));
    }
    stat.merge(local);
  }
  return to_estimate(stat);
}

double sup_loss_mean(const EmbeddingSet& dataset, const std::vector<std::string>& task_labels,
                     const Vec& label_dist, const std::map<std::string, Vec>& means,
                     const MarginLossKind& kind) {
  if (task_labels.size() < 2) throw std::invalid_argument("sup_loss_mean: need >= 2 classes");
  Vec dist = label_dist;
  if (dist.empty())
    dist.assign(task_labels.size(), 1.0 / static_cast<double>(task_labels.size()));
  std::vector<const Vec*> rows;
  for (const auto& label : task_labels) {
    auto it = means.find(label);
    if (it == means.end())
      throw std::invalid_argument("sup_loss_mean: missing mean for label '" + label + "'");
    rows.push_back(&it->second);
  }
  double total = 0.0;
  for (size_t slot = 0; slot < task_labels.size(); ++slot) {
    RunningStat per_class;
    for (const auto& row : dataset.rows)
      if (row.label == task_labels[slot])
        per_class.add(margins_loss(row.vector, rows, slot, kind));
    if (per_class.count() == 0)
      throw std::invalid_argument("sup_loss_mean: no rows for label '" + task_labels[slot] + "'");
    total += dist[slot] * per_class.mean();
  }
  return total;
}

SampledTask sample_task_distinct(const ClassPrior& prior, int k, CounterRng& rng) {
  if (prior.num_classes() < k + 1)
    throw std::invalid_argument("sample_task_distinct: fewer than k+1 classes");
  for (;;) {
    std::vector<int> classes(static_cast<size_t>(k + 1));
    std::set<int> seen;
    for (int i = 0; i <= k; ++i) {
      classes[static_cast<size_t>(i)] = prior.sample(rng);
      seen.insert(classes[static_cast<size_t>(i)]);
    }
    if (static_cast<int>(seen.size()) == k + 1) {
      const int anchor = classes[0];
      return SampledTask{make_task(std::move(classes)), anchor};
    }
  }
}

SampledTask sample_task_D(const ClassPrior& prior, int k, CounterRng& rng) {
  for (;;) {
    const int anchor = prior.sample(rng);
    std::set<int> distinct{anchor};
    bool collided = false;
    for (int i = 0; i < k; ++i) {
      const int c = prior.sample(rng);
      if (c == anchor) {
        collided = true;
        break;
      }
      distinct.insert(c);
    }
    if (collided || distinct.size() < 2) continue;
    std::vector<int> classes(distinct.begin(), distinct.end());
    return SampledTask{make_task(std::move(classes)), anchor};
  }
}

TaskWeights task_weights(const ClassPrior& prior, int k, const Task& task) {
  const auto tuples = enumerate_tuples(prior, k);
  std::vector<int> wanted(task.class_indices.begin(), task.class_indices.end());
  std::sort(wanted.begin(), wanted.end());
  double total = 0.0;
  std::map<int, double> anchor_mass;
  for (const auto& t : tuples) {
    if (!t.collision_indices.empty()) continue;
    if (t.distinct_classes != wanted) continue;
    total += t.probability;
    anchor_mass[t.classes[0]] += t.probability;
  }
  if (total <= 0.0)
    throw std::invalid_argument("task_weights: task has zero probability under D");
  TaskWeights w;
  w.rho_min_plus = 1.0;
  for (int c : task.class_indices) {
    const auto it = anchor_mass.find(c);
    const double p = it == anchor_mass.end() ? 0.0 : it->second / total;
    w.rho_min_plus = std::min(w.rho_min_plus, p);
  }
  w.p_max = *std::max_element(task.label_dist.begin(), task.label_dist.end());
  return w;
}

}  // namespace shiftbounds
