#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "shiftbounds/complexity.hpp"
#include "support/oracles.hpp"
#include "support/test_models.hpp"

using namespace shiftbounds;
using shiftbounds::testing::chi_mean;
using shiftbounds::testing::harness_instance;
using shiftbounds::testing::jacobi_eigenvalues;
using shiftbounds::testing::point_mass_model;
using shiftbounds::testing::random_psd;

namespace {
const MarginLossKind kHinge{MarginLoss::hinge, 1, LogBase::two};
}

TEST_CASE("spectral norm by power iteration") {
  Mat diag(2, 2);
  diag(0, 0) = 3.0;
  diag(1, 1) = 1.0;
  CHECK(spectral_norm(diag, 1e-12, 1000) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(spectral_norm(Mat::identity(5), 1e-12, 1000) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spectral_norm(Mat(3, 3), 1e-12, 1000) == doctest::Approx(0.0));

  // random PSD matrices against the Jacobi oracle
  CounterRng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat m = random_psd(8, 1.0 + rng.next_uniform(), rng);
    const auto eig = jacobi_eigenvalues(m);
    const double top = *std::max_element(eig.begin(), eig.end());
    CHECK(spectral_norm(m, 1e-13, 20000) == doctest::Approx(top).epsilon(1e-8));
  }

  Mat asym(2, 2);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(spectral_norm(asym, 1e-10, 100), std::invalid_argument);
}

TEST_CASE("intra-class deviation") {
  SUBCASE("point masses have zero deviation") {
    const auto pm = point_mass_model({Vec{0.5, 0.0}, Vec{-0.5, 0.0}}, Vec{0.5, 0.5}, 1.0);
    const auto s = intra_class_deviation(pm, LinearEncoder::identity(), 5000, 1);
    CHECK(s.s_value == doctest::Approx(0.0));
  }

  SUBCASE("isotropic classes against the chi-distribution oracle") {
    const double sigma = 0.2;
    const int d = 4;
    std::vector<ClassDistribution> classes(
        2, ClassDistribution{Vec(static_cast<size_t>(d), 0.0),
                             Mat::scaled_identity(d, sigma * sigma)});
    const LatentModel m(ClassPrior(Vec{0.5, 0.5}), classes, 10.0);
    const auto s = intra_class_deviation(m, LinearEncoder::identity(), 200000, 2);
    const double expect = sigma * sigma * chi_mean(d);
    CHECK(std::fabs(s.s_value - expect) < 3.0 * s.s_std_error + 1e-9);
    for (const auto& pc : s.per_class)
      CHECK(pc.cov_spectral_norm == doctest::Approx(sigma * sigma).epsilon(1e-9));
  }

  SUBCASE("scaling the encoder by alpha scales s by alpha^2 exactly") {
    const auto inst = harness_instance(42, 0.0);
    const int d = inst.model.dimension();
    const double alpha = 1.7;
    const LinearEncoder unit = LinearEncoder::linear(Mat::identity(d), 10.0);
    const LinearEncoder scaled_enc =
        LinearEncoder::linear(Mat::scaled_identity(d, alpha), 10.0 * alpha);
    const auto s1 = intra_class_deviation(inst.model, unit, 20000, 3);
    const auto s2 = intra_class_deviation(inst.model, scaled_enc, 20000, 3);
    CHECK(s2.s_value == doctest::Approx(alpha * alpha * s1.s_value).epsilon(1e-9));
  }
}

TEST_CASE("class collision inner bound (E|z1| route)") {
  // z1 = f(x)^T (f(x1-) - f(x+)), all three from the same class
  for (const std::uint64_t seed : {51ULL, 52ULL}) {
    const auto inst = harness_instance(seed, 0.0);
    const auto& model = inst.model;
    for (int c = 0; c < model.num_classes(); ++c) {
      const double top = spectral_norm(model.class_dist(c).covariance, 1e-12, 10000);
      CounterRng rng = CounterRng::derive(seed, static_cast<std::uint64_t>(c));
      RunningStat z_abs, fnorm;
      for (int i = 0; i < 40000; ++i) {
        const Vec x = model.sample_point(c, rng);
        const Vec xp = model.sample_point(c, rng);
        const Vec xm = model.sample_point(c, rng);
        z_abs.add(std::fabs(dot(x, sub(xm, xp))));
        fnorm.add(norm(x));
      }
      const double rhs = std::sqrt(2.0) * std::sqrt(top) * fnorm.mean();
      const double se = std::sqrt(z_abs.std_error() * z_abs.std_error() +
                                  2.0 * top * fnorm.std_error() * fnorm.std_error());
      CHECK(z_abs.mean() <= rhs + 3.0 * se);
    }
  }
}

TEST_CASE("collision lemma with the explicit constant") {
  // L=_un(f) - 1 <= sqrt(2) s(f), hinge at k=1
  for (const std::uint64_t seed : {61ULL, 62ULL, 63ULL}) {
    const auto inst = harness_instance(seed, 0.0);
    const auto split =
        unsup_loss_split(inst.model, LinearEncoder::identity(), kHinge, 1, 100000, seed);
    const auto stats = intra_class_deviation(inst.model, LinearEncoder::identity(), 100000, seed);
    const double slack = std::sqrt(2.0) * stats.s_value - (split.l_eq.value - 1.0);
    const double se = std::sqrt(split.l_eq.std_error * split.l_eq.std_error +
                                2.0 * stats.s_std_error * stats.s_std_error);
    CHECK(slack > -3.0 * se);
  }
}

TEST_CASE("rademacher closed form") {
  const auto inst = harness_instance(71, 0.0);
  const auto set = draw_tuple_dataset(inst.model, 1, 40, 5);
  const int d = inst.model.dimension();

  SUBCASE("zero inputs give zero complexity") {
    TupleDataset zeros = set;
    for (auto& tuple : zeros.tuples)
      for (auto& v : tuple) v.assign(v.size(), 0.0);
    const auto r = rademacher_linear(zeros, 2.0, d, 32, 6);
    CHECK(r.mean == doctest::Approx(0.0));
    CHECK(r.std_error == doctest::Approx(0.0));
  }

  SUBCASE("doubling the Frobenius bound doubles the estimate exactly") {
    const auto r1 = rademacher_linear(set, 1.5, d, 64, 7);
    const auto r2 = rademacher_linear(set, 3.0, d, 64, 7);
    CHECK(r2.mean == doctest::Approx(2.0 * r1.mean).epsilon(1e-12));
  }

  SUBCASE("per-draw supremum dominates random feasible encoders") {
    const double w = 1.3;
    CounterRng rng(8);
    const size_t slots = set.tuples.front().size();
    std::vector<int> signs(set.tuples.size() * slots * static_cast<size_t>(d));
    for (int draw = 0; draw < 8; ++draw) {
      for (auto& s : signs) s = rng.next_uniform() < 0.5 ? -1 : 1;
      const Mat msig = rademacher_sup_matrix(set, d, signs);
      const double sup = w * frobenius_norm(msig);
      double best_random = -1e300;
      for (int t = 0; t < 1000; ++t) {
        Mat wmat(d, d);
        for (double& v : wmat.data) v = rng.next_gaussian();
        const double f = frobenius_norm(wmat);
        const double scale = rng.next_uniform() * w / f;  // anywhere inside the ball
        double inner = 0.0;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) inner += scale * wmat(a, b) * msig(a, b);
        best_random = std::max(best_random, inner);
        CHECK(inner <= sup + 1e-9);
      }
      // the supremum is attained at w * M(sigma)/||M(sigma)||_F
      const double fro = frobenius_norm(msig);
      if (fro > 0.0) {
        double attained = 0.0;
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) attained += (w * msig(a, b) / fro) * msig(a, b);
        CHECK(attained == doctest::Approx(sup).epsilon(1e-9));
        CHECK(best_random <= attained + 1e-9);
      }
    }
  }
}

TEST_CASE("generalization bound arithmetic") {
  RademacherEstimate rad;
  rad.mean = 0.0;
  rad.std_error = 0.0;
  rad.draws = 1;
  rad.sample_size = 10000;
  rad.k = 1;
  const auto g = gen_bound(rad, 1.0, 1.0, 1.0, 0.05);
  const double expect = 3.0 * std::sqrt(std::log(4.0 / 0.05) / (2.0 * 10000.0)) +
                        3.0 * std::sqrt(std::log(2.0 / 0.05) / (2.0 * 10000.0));
  CHECK(g.value == doctest::Approx(expect).epsilon(1e-12));

  // the documented explicit-constant formula, recomputed in full
  rad.mean = 12.5;
  rad.k = 3;
  const double r = 1.4, b = 2.2, eta = 1.0, delta = 0.1;
  const auto g2 = gen_bound(rad, r, b, eta, delta);
  const double m = 10000.0;
  const double manual = 4.0 * std::sqrt(3.0) * eta * r * std::sqrt(3.0) * 12.5 / m +
                        3.0 * b * std::sqrt(std::log(4.0 / delta) / (2.0 * m)) +
                        3.0 * b * std::sqrt(std::log(2.0 / delta) / (2.0 * m));
  CHECK(g2.value == doctest::Approx(manual).epsilon(1e-12));

  // quadrupling M halves the concentration terms and quarters the rad term
  RademacherEstimate rad4 = rad;
  rad4.sample_size = 40000;
  const auto g4 = gen_bound(rad4, r, b, eta, delta);
  CHECK(g4.constants.at("rad_term") ==
        doctest::Approx(g2.constants.at("rad_term") / 4.0).epsilon(1e-12));
  CHECK(g4.constants.at("concentration_term") ==
        doctest::Approx(g2.constants.at("concentration_term") / 2.0).epsilon(1e-12));
  CHECK(g4.constants.at("hoeffding_term") ==
        doctest::Approx(g2.constants.at("hoeffding_term") / 2.0).epsilon(1e-12));

  // monotone: nonincreasing in M, nondecreasing in R, B, k
  CHECK(g4.value < g2.value);
  CHECK(gen_bound(rad, r * 2.0, b, eta, delta).value >= g2.value);
  CHECK(gen_bound(rad, r, b * 2.0, eta, delta).value >= g2.value);
  RademacherEstimate radk = rad;
  radk.k = 4;
  CHECK(gen_bound(radk, r, b, eta, delta).value >= g2.value);

  CHECK_THROWS_AS(gen_bound(rad, r, b, eta, 1.5), std::invalid_argument);
}
