#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "shiftbounds/classifier.hpp"
#include "shiftbounds/shift.hpp"
#include "support/test_models.hpp"

using namespace shiftbounds;
using shiftbounds::testing::harness_instance;
using shiftbounds::testing::point_mass_model;

namespace {

const MarginLossKind kHinge{MarginLoss::hinge, 1, LogBase::two};

/// Dense simplex-grid projection oracle for 3 vertices in 2-D.
double grid_residual(const std::vector<Vec>& means, const Vec& target, double step) {
  double best = std::numeric_limits<double>::infinity();
  for (double w0 = 0.0; w0 <= 1.0 + 1e-12; w0 += step) {
    for (double w1 = 0.0; w1 + w0 <= 1.0 + 1e-12; w1 += step) {
      const double w2 = 1.0 - w0 - w1;
      const double px = w0 * means[0][0] + w1 * means[1][0] + w2 * means[2][0];
      const double py = w0 * means[0][1] + w1 * means[1][1] + w2 * means[2][1];
      const double dx = px - target[0], dy = py - target[1];
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("shift profiles from means") {
  const std::vector<Vec> pre{Vec{1.0, 0.0}, Vec{0.0, 1.0}};
  SUBCASE("identical means give a zero profile") {
    const auto p = shift_from_means(pre, pre);
    CHECK(p.epsilon == doctest::Approx(0.0));
    for (const auto& d : p.deltas) CHECK(norm(d) == doctest::Approx(0.0));
  }
  SUBCASE("one translated class sets epsilon") {
    std::vector<Vec> down = pre;
    down[1] = Vec{0.0, -1.0};  // delta norm 2
    const auto p = shift_from_means(pre, down);
    CHECK(p.epsilon == doctest::Approx(2.0));
    CHECK(norm(p.deltas[1]) == doctest::Approx(2.0));
    // round trip: pre - delta reproduces the downstream means exactly
    for (size_t c = 0; c < pre.size(); ++c)
      CHECK(norm(sub(sub(pre[c], p.deltas[c]), down[c])) <= 1e-12);
  }
  SUBCASE("planted deltas are recovered from samples") {
    const auto inst = harness_instance(5, 0.25);
    const auto& model = inst.model;
    CounterRng rng(55);
    const long long n = 100000;
    std::vector<Vec> pre_means = model_class_means(model, LinearEncoder::identity());
    for (int c = 0; c < model.num_classes(); ++c) {
      Vec acc(static_cast<size_t>(model.dimension()), 0.0);
      double cov_trace = 0.0;
      for (int j = 0; j < model.dimension(); ++j)
        cov_trace += model.class_dist(c).covariance(j, j);
      for (long long i = 0; i < n; ++i) {
        Vec x = model.sample_point(c, rng);
        axpy(1.0, x, acc);
      }
      for (double& v : acc) v /= static_cast<double>(n);
      const Vec down = sub(acc, inst.shift.deltas[static_cast<size_t>(c)]);
      const Vec recovered = sub(pre_means[static_cast<size_t>(c)], down);
      const double se = std::sqrt(cov_trace / static_cast<double>(n));
      CHECK(norm(sub(recovered, inst.shift.deltas[static_cast<size_t>(c)])) < 3.0 * se + 1e-9);
    }
  }
}

TEST_CASE("mean shift statistic") {
  std::vector<Vec> pre;
  for (int c = 0; c < 10; ++c) pre.push_back(Vec{static_cast<double>(c), 0.0});
  CHECK(mean_shift_stat(pre, pre) == doctest::Approx(0.0));

  auto down = pre;
  down[3] = add(down[3], Vec{0.0, 2.0});
  CHECK(mean_shift_stat(pre, down) == doctest::Approx(0.2));

  // uniform translation by v gives exactly ||v||
  const Vec v{0.6, -0.8};
  std::vector<Vec> shifted;
  for (const auto& m : pre) shifted.push_back(add(m, v));
  CHECK(mean_shift_stat(pre, shifted) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(mean_shift_stat(pre, std::vector<Vec>{Vec{0.0, 0.0}}), std::invalid_argument);
}

TEST_CASE("actual bias term") {
  SUBCASE("zero shift vanishes exactly") {
    const auto inst = harness_instance(6, 0.0);
    const auto est =
        bias_actual(inst.model, LinearEncoder::identity(), kHinge, inst.shift, 20000, 7);
    CHECK(est.value == doctest::Approx(0.0));
    CHECK(est.std_error == doctest::Approx(0.0));
  }

  SUBCASE("1-D point masses, hand computed") {
    const auto pm = point_mass_model({Vec{0.3}, Vec{-0.3}}, Vec{0.5, 0.5}, 1.0);
    ShiftProfile shift;
    shift.deltas = {Vec{0.05}, Vec{-0.05}};
    shift.epsilon = 0.05;
    const auto est = estimate_bias(pm, LinearEncoder::identity(), kHinge, shift, 1, 20000, 8);
    // margins 0.15 keep the hinge active, so every pair contributes -0.03
    CHECK(est.t_actual.value == doctest::Approx(-0.03).epsilon(1e-12));
    CHECK(est.t_actual.std_error == doctest::Approx(0.0));
    // Cauchy-Schwarz is tight here: b_sup = eps * (|g0| + |g1|) = 0.05 * 0.6
    CHECK(est.b_sup == doctest::Approx(0.03).epsilon(1e-12));
  }

  SUBCASE("uniform shift cancels exactly") {
    const auto inst = harness_instance(7, 0.0);
    ShiftProfile uniform;
    uniform.epsilon = 0.2;
    for (int c = 0; c < inst.model.num_classes(); ++c)
      uniform.deltas.push_back(Vec(static_cast<size_t>(inst.model.dimension()),
                                   0.2 / std::sqrt(static_cast<double>(inst.model.dimension()))));
    const auto est =
        bias_actual(inst.model, LinearEncoder::identity(), kHinge, uniform, 20000, 9);
    CHECK(est.value == doctest::Approx(0.0));
    CHECK(est.std_error == doctest::Approx(0.0));
  }
}

TEST_CASE("bias estimate invariants on harness instances") {
  for (const std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    const auto inst = harness_instance(seed, 0.3);
    for (const auto loss : {MarginLoss::hinge, MarginLoss::logistic}) {
      const MarginLossKind kind{loss, 1, LogBase::natural};  // natural keeps |l'| <= 1
      const auto est =
          estimate_bias(inst.model, LinearEncoder::identity(), kind, inst.shift, 1, 50000, seed);
      // |t_actual| <= b_sup holds deterministically (same draw stream)
      CHECK(std::fabs(est.t_actual.value) <= est.b_sup + 1e-12);
      CHECK(est.b_sup <= est.ceilings.at("hinge") + 3.0 * est.g_std_error * est.epsilon_used);
      CHECK(est.b_sup <= est.ceilings.at("lipschitz") + 1e-9);
      CHECK(est.b_sup <=
            est.ceilings.at("subgaussian") + 3.0 * est.g_std_error * est.epsilon_used);
    }
  }
}

TEST_CASE("worst-case bias over the epsilon ball") {
  CHECK(bias_sup(harness_instance(14, 0.0).model, LinearEncoder::identity(), kHinge, 0.0, 1000,
                 3) == doctest::Approx(0.0));

  // mirror-symmetric two-class model: g vectors are opposite, b_sup = 2 eps |g0|
  const auto pm = point_mass_model({Vec{0.4, 0.0}, Vec{-0.4, 0.0}}, Vec{0.5, 0.5}, 1.0);
  const auto est =
      estimate_bias(pm, LinearEncoder::identity(), kHinge, ShiftProfile::zero(2, 2), 1, 20000, 4);
  CHECK(norm(add(est.g[0], est.g[1])) == doctest::Approx(0.0).epsilon(1e-12));
  const double eps = 0.25;
  CHECK(bias_sup(pm, LinearEncoder::identity(), kHinge, eps, 20000, 4) ==
        doctest::Approx(2.0 * eps * norm(est.g[0])).epsilon(1e-12));

  // positive homogeneity in eps is exact
  const auto inst = harness_instance(15, 0.0);
  const double b1 = bias_sup(inst.model, LinearEncoder::identity(), kHinge, 0.1, 20000, 5);
  const double b2 = bias_sup(inst.model, LinearEncoder::identity(), kHinge, 0.2, 20000, 5);
  CHECK(b2 == doctest::Approx(2.0 * b1).epsilon(1e-12));
}

TEST_CASE("closed-form ceilings") {
  const auto c = bias_ceilings(1.0, 0.5, 1.0, 1.0);
  CHECK(c.at("lipschitz") == doctest::Approx(1.0));
  CHECK(c.at("hinge") == doctest::Approx(1.0));
  CHECK(c.at("logistic") == doctest::Approx(1.0));

  const auto zero = bias_ceilings(2.0, 0.0, 3.0, 1.0);
  for (const auto& [name, v] : zero) CHECK(v == doctest::Approx(0.0));

  const auto sg = bias_ceilings(1.0, 1.0, 1.0, 1.0);
  CHECK(sg.at("subgaussian") ==
        doctest::Approx(2.0 * std::sqrt(2.0 / 3.14159265358979323846)).epsilon(1e-9));
  CHECK_THROWS_AS(bias_ceilings(-1.0, 0.5, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("sigma_f estimation") {
  SUBCASE("point mass at the origin") {
    const std::vector<Vec> samples(200, Vec{0.0, 0.0});
    CHECK(estimate_sigma_f(samples, 16, 1) == doctest::Approx(0.0));
  }
  SUBCASE("isotropic unit Gaussian") {
    CounterRng rng(2);
    std::vector<Vec> samples;
    for (int i = 0; i < 100000; ++i)
      samples.push_back(Vec{rng.next_gaussian(), rng.next_gaussian()});
    CHECK(estimate_sigma_f(samples, 64, 3) == doctest::Approx(1.0).epsilon(0.10));
  }
  SUBCASE("anisotropic Gaussian diag(4, 1)") {
    CounterRng rng(4);
    std::vector<Vec> samples;
    for (int i = 0; i < 100000; ++i)
      samples.push_back(Vec{2.0 * rng.next_gaussian(), rng.next_gaussian()});
    CHECK(estimate_sigma_f(samples, 64, 5) == doctest::Approx(2.0).epsilon(0.10));
  }
  SUBCASE("too few samples") {
    CHECK_THROWS_AS(estimate_sigma_f(std::vector<Vec>(10, Vec{0.0}), 8, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("certified model sigma_f") {
  // zero-mean isotropic classes: sigma_f = max sigma * sqrt(pi/2)
  std::vector<ClassDistribution> classes;
  classes.push_back({Vec{0.0, 0.0}, Mat::scaled_identity(2, 0.25)});
  classes.push_back({Vec{0.0, 0.0}, Mat::scaled_identity(2, 0.01)});
  const LatentModel m(ClassPrior(Vec{0.5, 0.5}), classes, 10.0);
  const double expect = 0.5 * std::sqrt(3.14159265358979323846 / 2.0);
  CHECK(model_sigma_f(m, LinearEncoder::identity()) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("hull projection") {
  SUBCASE("target equal to a pretraining mean") {
    const std::vector<Vec> means{Vec{0.2, 0.1}, Vec{-0.5, 0.3}, Vec{0.4, -0.6}};
    const auto h = hull_project(means, means[1], 1e-13, 10000);
    CHECK(h.residual_norm <= 1e-6);
    CHECK(h.weights[1] == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("1-D endpoints") {
    const auto h = hull_project({Vec{0.0}, Vec{1.0}}, Vec{2.0}, 1e-12, 10000);
    CHECK(h.projected[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(h.residual_norm == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("planted in-hull targets have residual <= 1e-6") {
    CounterRng rng(6);
    for (int trial = 0; trial < 25; ++trial) {
      const int n = 3 + static_cast<int>(rng.next_uniform() * 4);
      const int d = 2 + static_cast<int>(rng.next_uniform() * 3);
      std::vector<Vec> means;
      for (int i = 0; i < n; ++i) {
        Vec m(static_cast<size_t>(d));
        for (double& v : m) v = rng.next_gaussian();
        means.push_back(std::move(m));
      }
      Vec w(static_cast<size_t>(n));
      double ws = 0.0;
      for (double& v : w) {
        v = rng.next_uniform() + 0.05;
        ws += v;
      }
      for (double& v : w) v /= ws;
      Vec target(static_cast<size_t>(d), 0.0);
      for (int i = 0; i < n; ++i)
        axpy(w[static_cast<size_t>(i)], means[static_cast<size_t>(i)], target);
      const auto h = hull_project(means, target, 1e-13, 10000);
      CHECK(h.residual_norm <= 1e-6);
    }
  }
  SUBCASE("dense-grid oracle agreement on random 2-D triangles") {
    CounterRng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Vec> means;
      for (int i = 0; i < 3; ++i) {
        Vec m{rng.next_gaussian(), rng.next_gaussian()};
        const double n = norm(m);
        if (n > 1.0)
          for (double& v : m) v /= n;  // keep vertices in the unit ball
        means.push_back(std::move(m));
      }
      const Vec target{2.0 * rng.next_uniform() - 1.0, 2.0 * rng.next_uniform() - 1.0};
      const auto h = hull_project(means, target, 1e-13, 20000);
      const double oracle = grid_residual(means, target, 1e-3);
      CHECK(std::fabs(h.residual_norm - oracle) <= 2e-3);
    }
  }
  SUBCASE("non-convergence reports the gap") {
    const std::vector<Vec> means{Vec{0.0, 0.0}, Vec{1.0, 0.0}, Vec{0.0, 1.0}};
    CHECK_THROWS_AS(hull_project(means, Vec{0.3, 0.3}, -1.0, 3), std::runtime_error);
  }
}

TEST_CASE("novel class bias bound") {
  CHECK(novel_class_bias_bound(0.3, 0.0, 1.0, 1.0) == doctest::Approx(0.3));
  CHECK(novel_class_bias_bound(0.3, 0.2, 1.0, 1.0) == doctest::Approx(0.7));
  // monotone nondecreasing in the residual
  double prev = -1.0;
  for (double r = 0.0; r <= 1.0; r += 0.1) {
    const double b = novel_class_bias_bound(0.1, r, 2.0, 1.5);
    CHECK(b >= prev);
    prev = b;
  }
  CHECK_THROWS_AS(novel_class_bias_bound(0.1, -0.2, 1.0, 1.0), std::invalid_argument);
}
