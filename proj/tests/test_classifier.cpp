#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "shiftbounds/classifier.hpp"
#include "support/test_models.hpp"

using namespace shiftbounds;
using shiftbounds::testing::point_mass_model;

namespace {

const MarginLossKind kHinge{MarginLoss::hinge, 1, LogBase::two};

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

/// E[max(0, 1 - Y)] for Y ~ N(m, s^2), exact.
double gaussian_hinge(double m, double s) {
  if (s <= 0.0) return std::max(0.0, 1.0 - m);
  const double u = (1.0 - m) / s;
  return (1.0 - m) * normal_cdf(u) + s * normal_pdf(u);
}

}  // namespace

TEST_CASE("model class means and empirical means") {
  const auto inst = shiftbounds::testing::harness_instance(77, 0.0);
  const auto means = model_class_means(inst.model, LinearEncoder::identity());
  for (int c = 0; c < inst.model.num_classes(); ++c)
    CHECK(norm(sub(means[static_cast<size_t>(c)], inst.model.class_dist(c).mean)) == 0.0);

  // two samples v and -v for one class average to zero
  EmbeddingSet tiny;
  tiny.dimension = 2;
  tiny.rows = {{"a", Vec{0.3, -0.7}}, {"a", Vec{-0.3, 0.7}}, {"b", Vec{1.0, 0.0}}};
  const auto em = empirical_class_means(tiny);
  CHECK(norm(em.at("a")) == doctest::Approx(0.0));
  CHECK(em.at("b")[0] == doctest::Approx(1.0));

  // empirical mean of 1e5 draws matches the model mean per coordinate
  const int c0 = 0;
  CounterRng rng(9);
  const long long n = 100000;
  Vec acc(static_cast<size_t>(inst.model.dimension()), 0.0);
  Vec acc2(static_cast<size_t>(inst.model.dimension()), 0.0);
  for (long long i = 0; i < n; ++i) {
    const Vec x = inst.model.sample_point(c0, rng);
    for (size_t j = 0; j < x.size(); ++j) {
      acc[j] += x[j];
      acc2[j] += x[j] * x[j];
    }
  }
  for (size_t j = 0; j < acc.size(); ++j) {
    const double mean = acc[j] / n;
    const double var = acc2[j] / n - mean * mean;
    const double se = std::sqrt(var / n);
    CHECK(std::fabs(mean - inst.model.class_dist(c0).mean[j]) < 3.0 * se + 1e-9);
  }
}

TEST_CASE("mean classifier argmax") {
  MeanClassifier clf;
  clf.classes = {"0", "1"};
  clf.rows = {Vec{1.0, 0.0}, Vec{0.0, 1.0}};
  CHECK(mean_classify(clf, Vec{1.0, 0.0}) == 0);
  CHECK(mean_classify(clf, Vec{0.0, 1.0}) == 1);
  CHECK(mean_classify(clf, Vec{1.0, 1.0}) == 0);  // tie goes to the lowest index

  // brute-force scan oracle on random rows and queries
  CounterRng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    MeanClassifier r;
    const int c = 2 + static_cast<int>(rng.next_uniform() * 5);
    for (int i = 0; i < c; ++i) {
      r.classes.push_back(std::to_string(i));
      r.rows.push_back(Vec{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()});
    }
    const Vec z{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()};
    int best = 0;
    for (int i = 1; i < c; ++i)
      if (dot(r.rows[static_cast<size_t>(i)], z) > dot(r.rows[static_cast<size_t>(best)], z))
        best = i;
    CHECK(mean_classify(r, z) == best);
    // argmax invariance under positive scaling of the query
    CHECK(mean_classify(r, scaled(z, 7.25)) == mean_classify(r, z));
  }
}

TEST_CASE("accuracy of the mean classifier") {
  // dataset sampled from the classifier's own well-separated point masses
  MeanClassifier clf;
  clf.classes = {"0", "1", "2"};
  clf.rows = {Vec{1.0, 0.0}, Vec{-1.0, 0.0}, Vec{0.0, 1.0}};
  EmbeddingSet data;
  data.dimension = 2;
  for (int i = 0; i < 30; ++i)
    data.rows.push_back({std::to_string(i % 3), clf.rows[static_cast<size_t>(i % 3)]});
  CHECK(accuracy_mean(data, clf) == doctest::Approx(1.0));

  // adversarial label swap on a balanced two-class set flips the accuracy
  MeanClassifier two;
  two.classes = {"a", "b"};
  two.rows = {Vec{1.0, 0.0}, Vec{-1.0, 0.0}};
  EmbeddingSet balanced;
  balanced.dimension = 2;
  CounterRng rng(12);
  for (int i = 0; i < 400; ++i) {
    const Vec z{rng.next_gaussian() * 2.0, rng.next_gaussian()};
    balanced.rows.push_back({i % 2 == 0 ? "a" : "b", z});
  }
  const double acc = accuracy_mean(balanced, two);
  EmbeddingSet swapped = balanced;
  for (auto& row : swapped.rows) row.label = row.label == "a" ? "b" : "a";
  CHECK(accuracy_mean(swapped, two) == doctest::Approx(1.0 - acc));

  // well-separated Gaussians: accuracy >= 0.999 at 1e4 points
  std::vector<ClassDistribution> classes;
  classes.push_back({Vec{5.0, 0.0}, Mat::identity(2)});
  classes.push_back({Vec{-5.0, 0.0}, Mat::identity(2)});
  const LatentModel gm(ClassPrior(Vec{0.5, 0.5}), classes, 20.0);
  EmbeddingSet gauss;
  gauss.dimension = 2;
  CounterRng grng(13);
  for (int i = 0; i < 10000; ++i) {
    const int c = gm.prior().sample(grng);
    gauss.rows.push_back({std::to_string(c), gm.sample_point(c, grng)});
  }
  MeanClassifier gclf;
  gclf.classes = {"0", "1"};
  gclf.rows = model_class_means(gm, LinearEncoder::identity());
  CHECK(accuracy_mean(gauss, gclf) >= 0.999);

  // label outside the class set
  EmbeddingSet bad = data;
  bad.rows.push_back({"zebra", Vec{0.0, 0.0}});
  CHECK_THROWS_AS(accuracy_mean(bad, clf), std::invalid_argument);
}

TEST_CASE("supervised loss of the mean classifier") {
  // orthogonal unit point masses, 2-way hinge: margins are exactly 1
  const auto ortho = point_mass_model(
      {Vec{1.0, 0.0, 0.0}, Vec{0.0, 1.0, 0.0}, Vec{0.0, 0.0, 1.0}},
      Vec{1.0 / 3, 1.0 / 3, 1.0 / 3}, 1.0);
  const auto means = model_class_means(ortho, LinearEncoder::identity());
  const auto task = make_task({0, 1, 2});
  const auto est = sup_loss_mean(ortho, LinearEncoder::identity(), task, means,
                                 MarginLossKind{MarginLoss::hinge, 2, LogBase::two}, 2000, 3);
  CHECK(est.value == doctest::Approx(0.0));
  CHECK(est.std_error == doctest::Approx(0.0));

  // all classes identical: margins 0, hinge loss 1
  const Vec v{0.4, 0.2, 0.0};
  const auto same = point_mass_model({v, v}, Vec{0.5, 0.5}, 1.0);
  const auto same_means = model_class_means(same, LinearEncoder::identity());
  const auto est_same = sup_loss_mean(same, LinearEncoder::identity(), make_task({0, 1}),
                                      same_means, kHinge, 2000, 4);
  CHECK(est_same.value == doctest::Approx(1.0));

  // enumeration oracle on a lopsided point-mass model
  const auto pm = point_mass_model({Vec{0.9, 0.0}, Vec{-0.2, 0.5}, Vec{0.1, -0.8}},
                                   Vec{0.6, 0.3, 0.1}, 1.0);
  const auto pm_means = model_class_means(pm, LinearEncoder::identity());
  const auto t3 = make_task({0, 1, 2}, Vec{0.2, 0.5, 0.3});
  double oracle = 0.0;
  for (size_t slot = 0; slot < 3; ++slot) {
    Vec margins;
    for (size_t other = 0; other < 3; ++other) {
      if (other == slot) continue;
      margins.push_back(dot(pm_means[slot], sub(pm_means[slot], pm_means[other])));
    }
    oracle += t3.label_dist[slot] *
              margin_loss(MarginLossKind{MarginLoss::hinge, 2, LogBase::two}, margins);
  }
  const auto est3 = sup_loss_mean(pm, LinearEncoder::identity(), t3, pm_means,
                                  MarginLossKind{MarginLoss::hinge, 2, LogBase::two}, 100000, 5);
  CHECK(std::fabs(est3.value - oracle) < 3.0 * est3.std_error + 1e-12);
}

TEST_CASE("dataset route of the supervised loss") {
  EmbeddingSet data;
  data.dimension = 2;
  data.rows = {{"a", Vec{1.0, 0.0}},  {"a", Vec{0.8, 0.1}},  {"b", Vec{0.0, 1.0}},
               {"b", Vec{0.1, 0.9}},  {"b", Vec{-0.1, 1.1}}};
  const auto means = empirical_class_means(data);
  const double loss = sup_loss_mean(data, {"a", "b"}, Vec{}, means, kHinge);
  // hand-check: uniform over classes, exhaustive over rows within each class
  double expect = 0.0;
  for (const auto& label : {std::string("a"), std::string("b")}) {
    const std::string other = label == "a" ? "b" : "a";
    double class_sum = 0.0;
    int count = 0;
    for (const auto& row : data.rows) {
      if (row.label != label) continue;
      const double m = dot(row.vector, sub(means.at(label), means.at(other)));
      class_sum += std::max(0.0, 1.0 - m);
      ++count;
    }
    expect += 0.5 * class_sum / count;
  }
  CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(sup_loss_mean(data, {"a", "zebra"}, Vec{}, means, kHinge),
                  std::invalid_argument);
}

TEST_CASE("best linear classifier does at least as well as the mean classifier") {
  // two Gaussian classes; hinge losses evaluate in closed form, so the grid
  // oracle is exact
  const Vec mu_a{1.2, 0.3}, mu_b{-0.8, -0.1};
  const Mat cov_a = Mat::scaled_identity(2, 0.4);
  const Mat cov_b = Mat::scaled_identity(2, 0.7);

  auto task_loss = [&](const Vec& w) {
    auto quad = [&](const Mat& s) {
      double q = 0.0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          q += w[static_cast<size_t>(i)] * s(i, j) * w[static_cast<size_t>(j)];
      return q;
    };
    const double la = gaussian_hinge(dot(w, mu_a), std::sqrt(quad(cov_a)));
    const double lb = gaussian_hinge(-dot(w, mu_b), std::sqrt(quad(cov_b)));
    return 0.5 * (la + lb);
  };

  const Vec w_mean = sub(mu_a, mu_b);
  const double mean_loss = task_loss(w_mean);
  double best = mean_loss;
  for (double x = -3.0; x <= 3.0; x += 0.05)
    for (double y = -3.0; y <= 3.0; y += 0.05) best = std::min(best, task_loss(Vec{x, y}));
  CHECK(best <= mean_loss + 1e-12);
  // and the mean classifier is within the coarse-grid resolution of optimal
  CHECK(mean_loss <= best + 0.25);
}

TEST_CASE("task samplers") {
  SUBCASE("distinct sampler always returns both classes at C=2") {
    const ClassPrior p(Vec{0.3, 0.7});
    CounterRng rng(21);
    for (int i = 0; i < 2000; ++i) {
      const auto st = sample_task_distinct(p, 1, rng);
      std::vector<int> sorted = st.task.class_indices;
      std::sort(sorted.begin(), sorted.end());
      CHECK(sorted == std::vector<int>{0, 1});
    }
    CHECK_THROWS_AS(sample_task_distinct(p, 2, rng), std::invalid_argument);
  }

  SUBCASE("distinct-pair acceptance rate is 1 - tau") {
    const ClassPrior p(Vec(10, 0.1));
    CounterRng rng(22);
    const long long n = 100000;
    long long distinct = 0;
    for (long long i = 0; i < n; ++i) {
      const int a = p.sample(rng), b = p.sample(rng);
      if (a != b) ++distinct;
    }
    const double q = 0.9;
    const double se = std::sqrt(q * (1 - q) / n);
    CHECK(std::fabs(static_cast<double>(distinct) / n - q) < 3 * se);
  }

  SUBCASE("unordered pair frequencies are uniform at C=4, k=1") {
    const ClassPrior p(Vec(4, 0.25));
    CounterRng rng(23);
    const long long n = 60000;
    std::map<std::pair<int, int>, long long> counts;
    for (long long i = 0; i < n; ++i) {
      const auto st = sample_task_distinct(p, 1, rng);
      auto key = std::minmax(st.task.class_indices[0], st.task.class_indices[1]);
      ++counts[key];
    }
    const double q = 1.0 / 6.0;
    const double se = std::sqrt(q * (1 - q) / n);
    for (const auto& [pair, count] : counts)
      CHECK(std::fabs(static_cast<double>(count) / n - q) < 3 * se);
  }

  SUBCASE("task distribution D at C=2, k=1 is the full pair") {
    const ClassPrior p(Vec{0.4, 0.6});
    CounterRng rng(24);
    for (int i = 0; i < 1000; ++i) {
      const auto st = sample_task_D(p, 1, rng);
      CHECK(st.task.class_indices == std::vector<int>{0, 1});
      CHECK((st.anchor_class == 0 || st.anchor_class == 1));
    }
  }

  SUBCASE("task distribution D matches exact enumeration at C=3, k=2") {
    const ClassPrior p(Vec{1.0 / 3, 1.0 / 3, 1.0 / 3});
    double no_collision = 0.0, size2 = 0.0;
    for (const auto& t : enumerate_tuples(p, 2)) {
      if (!t.collision_indices.empty()) continue;
      no_collision += t.probability;
      if (t.distinct_classes.size() == 2) size2 += t.probability;
    }
    const double expect = size2 / no_collision;
    CounterRng rng(25);
    const long long n = 100000;
    long long hits = 0;
    for (long long i = 0; i < n; ++i)
      if (sample_task_D(p, 2, rng).task.class_indices.size() == 2) ++hits;
    const double se = std::sqrt(expect * (1 - expect) / n);
    CHECK(std::fabs(static_cast<double>(hits) / n - expect) < 3 * se);
  }

  SUBCASE("raw-draw rate of full-size tasks equals the distinct-classes probability") {
    // a full-size task requires all k+1 classes distinct, so over raw
    // rho^{k+1} draws the joint rate of (accepted, |T| = k+1) is exactly p
    const ClassPrior p(Vec(5, 0.2));
    const int k = 2;
    double p_distinct = 0.0;
    for (const auto& t : enumerate_tuples(p, k))
      if (static_cast<int>(t.distinct_classes.size()) == k + 1) p_distinct += t.probability;
    CounterRng rng(27);
    const long long n = 100000;
    long long full = 0;
    for (long long i = 0; i < n; ++i) {
      std::set<int> seen{p.sample(rng)};
      for (int j = 0; j < k; ++j) seen.insert(p.sample(rng));
      if (static_cast<int>(seen.size()) == k + 1) ++full;
    }
    const double se = std::sqrt(p_distinct * (1 - p_distinct) / n);
    CHECK(std::fabs(static_cast<double>(full) / n - p_distinct) < 3 * se);
  }

  SUBCASE("empirical task distribution matches enumeration at C=4, k=2") {
    const ClassPrior p(Vec{0.4, 0.3, 0.2, 0.1});
    std::map<std::vector<int>, double> exact;
    double total = 0.0;
    for (const auto& t : enumerate_tuples(p, 2)) {
      if (!t.collision_indices.empty()) continue;
      exact[t.distinct_classes] += t.probability;
      total += t.probability;
    }
    for (auto& [q, mass] : exact) mass /= total;
    CounterRng rng(26);
    const long long n = 100000;
    std::map<std::vector<int>, long long> counts;
    for (long long i = 0; i < n; ++i) ++counts[sample_task_D(p, 2, rng).task.class_indices];
    for (const auto& [q, mass] : exact) {
      const double se = std::sqrt(mass * (1 - mass) / n);
      const double freq = static_cast<double>(counts[q]) / n;
      CHECK(std::fabs(freq - mass) < 3 * se + 1e-6);
    }
  }
}

TEST_CASE("task weights") {
  // uniform prior, full-size task: both weights are 1/(k+1)
  const ClassPrior uni(Vec{0.25, 0.25, 0.25, 0.25});
  for (int k = 1; k <= 2; ++k) {
    std::vector<int> cls;
    for (int i = 0; i <= k; ++i) cls.push_back(i);
    const auto w = task_weights(uni, k, make_task(cls));
    CHECK(w.rho_min_plus == doctest::Approx(1.0 / (k + 1)).epsilon(1e-12));
    CHECK(w.p_max == doctest::Approx(1.0 / (k + 1)).epsilon(1e-12));
  }

  // lopsided prior: at k=1 the pair conditional is exactly 1/2 by symmetry
  // of ordered pairs; at k=2 it becomes rho_1/(rho_0 + rho_1)
  const ClassPrior p(Vec{0.5, 0.3, 0.2});
  const auto w1 = task_weights(p, 1, make_task({0, 1}));
  CHECK(w1.rho_min_plus == doctest::Approx(0.5).epsilon(1e-12));
  const auto w2 = task_weights(p, 2, make_task({0, 1}));
  CHECK(w2.rho_min_plus == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(w2.p_max == doctest::Approx(0.5));

  // probability bounds
  CHECK(w2.rho_min_plus > 0.0);
  CHECK(w2.rho_min_plus <= w2.p_max * 2.0 + 1e-12);

  // a task that cannot occur under D at k=1 (three classes from one pair draw)
  CHECK_THROWS_AS(task_weights(p, 1, make_task({0, 1, 2})), std::invalid_argument);
}
