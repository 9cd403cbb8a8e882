#include "shiftbounds/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace shiftbounds {

namespace {
constexpr double kLn2 = 0.69314718055994530941723212145818;
constexpr long long kChunk = 16384;  // partition size for derived seeds
}  // namespace

double margin_loss(const MarginLossKind& kind, std::span<const double> v) {
  if (static_cast<int>(v.size()) != kind.ways)
    throw std::invalid_argument("margin_loss: expected " + std::to_string(kind.ways) +
                                " margins, got " + std::to_string(v.size()));
  if (kind.kind == MarginLoss::hinge) {
    double worst = -std::numeric_limits<double>::infinity();
    for (double x : v) worst = std::max(worst, -x);
    return std::max(0.0, 1.0 + worst);
  }
  // logistic: log(1 + sum exp(-v_i)), computed shift-stably
  double a = 0.0;
  for (double x : v) a = std::max(a, -x);
  double s = std::exp(-a);
  for (double x : v) s += std::exp(-x - a);
  const double nat = a + std::log(s);
  return kind.base == LogBase::two ? nat / kLn2 : nat;
}

Vec margin_loss_grad(const MarginLossKind& kind, std::span<const double> v) {
  if (static_cast<int>(v.size()) != kind.ways)
    throw std::invalid_argument("margin_loss_grad: margin count mismatch");
  Vec g(v.size(), 0.0);
  if (kind.kind == MarginLoss::hinge) {
    size_t arg = 0;
    for (size_t i = 1; i < v.size(); ++i)
      if (v[i] < v[arg]) arg = i;
    if (1.0 - v[arg] >= 0.0) g[arg] = -1.0;  // kink included, by convention
    return g;
  }
  double a = 0.0;
  for (double x : v) a = std::max(a, -x);
  double s = std::exp(-a);
  for (double x : v) s += std::exp(-x - a);
  const double scale = kind.base == LogBase::two ? 1.0 / kLn2 : 1.0;
  for (size_t i = 0; i < v.size(); ++i) g[i] = -scale * std::exp(-v[i] - a) / s;
  return g;
}

double loss_at_zero(const MarginLossKind& kind) {
  if (kind.kind == MarginLoss::hinge) return 1.0;
  const double nat = std::log(1.0 + static_cast<double>(kind.ways));
  return kind.base == LogBase::two ? nat / kLn2 : nat;
}

double loss_upper_bound(const MarginLossKind& kind, double r) {
  const double margin_cap = 2.0 * r * r;
  if (kind.kind == MarginLoss::hinge) return 1.0 + margin_cap;
  const double nat = margin_cap + std::log(1.0 + static_cast<double>(kind.ways));
  return kind.base == LogBase::two ? nat / kLn2 : nat;
}

double loss_lipschitz(const MarginLossKind& kind) {
  if (kind.kind == MarginLoss::hinge) return 1.0;
  return kind.base == LogBase::two ? 1.0 / kLn2 : 1.0;
}

double collision_constant(const MarginLossKind& kind) {
  const double c = std::sqrt(2.0);
  if (kind.kind == MarginLoss::logistic && kind.base == LogBase::two) return c / kLn2;
  return c;
}

double ntxent_batch(const std::vector<Vec>& embeddings, const InfoNCEConfig& config) {
  const size_t n2 = embeddings.size();
  if (n2 < 4 || n2 % 2 != 0)
    throw std::invalid_argument("ntxent_batch: need an even batch of at least 4");
  if (!(config.temperature > 0.0))
    throw std::invalid_argument("ntxent_batch: temperature must be positive");
  std::vector<double> norms(n2);
  for (size_t i = 0; i < n2; ++i) {
    norms[i] = norm(embeddings[i]);
    if (norms[i] == 0.0) throw std::invalid_argument("ntxent_batch: zero-norm embedding");
  }
  auto sim = [&](size_t i, size_t j) {
    return dot(embeddings[i], embeddings[j]) / (norms[i] * norms[j]);
  };
  double total = 0.0;
  for (size_t i = 0; i < n2; ++i) {
    const size_t j = (i % 2 == 0) ? i + 1 : i - 1;  // partner in the pair
    const double target = sim(i, j) / config.temperature;
    double maxlog = target;
    for (size_t m = 0; m < n2; ++m) {
      if (config.exclude_self && m == i) continue;
      maxlog = std::max(maxlog, sim(i, m) / config.temperature);
    }
    double denom = 0.0;
    for (size_t m = 0; m < n2; ++m) {
      if (config.exclude_self && m == i) continue;
      denom += std::exp(sim(i, m) / config.temperature - maxlog);
    }
    total += -(target - maxlog - std::log(denom));
  }
  return total / static_cast<double>(n2);
}

namespace {

double tuple_loss(const ContrastiveTuple& t, const LinearEncoder& enc,
                  const MarginLossKind& kind) {
  const Vec fx = enc.apply(t.anchor);
  const Vec fp = enc.apply(t.positive);
  Vec margins(t.negatives.size());
  for (size_t i = 0; i < t.negatives.size(); ++i)
    margins[i] = dot(fx, sub(fp, enc.apply(t.negatives[i])));
  MarginLossKind k = kind;
  k.ways = static_cast<int>(margins.size());
  return margin_loss(k, margins);
}

/// Runs `body` once per draw with a chunk-derived rng, merging Welford stats.
template <typename Body>
RunningStat chunked_estimate(long long draws, std::uint64_t seed, Body&& body) {
  RunningStat stat;
  const long long chunks = (draws + kChunk - 1) / kChunk;
  for (long long c = 0; c < chunks; ++c) {
    CounterRng rng = CounterRng::derive(seed, static_cast<std::uint64_t>(c));
    RunningStat local;
    const long long n = std::min(kChunk, draws - c * kChunk);
    for (long long i = 0; i < n; ++i) local.add(body(rng));
    stat.merge(local);
  }
  return stat;
}

}  // namespace

Estimate unsup_loss(const LatentModel& model, const LinearEncoder& encoder,
                    const MarginLossKind& kind, int k, long long draws,
                    std::uint64_t seed) {
  if (kind.ways != k) throw std::invalid_argument("unsup_loss: kind.ways must equal k");
  if (draws < 1) throw std::invalid_argument("unsup_loss: draws must be positive");
  auto stat = chunked_estimate(draws, seed, [&](CounterRng& rng) {
    return tuple_loss(sample_tuple(model, k, rng), encoder, kind);
  });
  return to_estimate(stat);
}

SplitLoss unsup_loss_split(const LatentModel& model, const LinearEncoder& encoder,
                           const MarginLossKind& kind, int k, long long draws,
                           std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("unsup_loss_split: k must be >= 1");
  if (draws < 1) throw std::invalid_argument("unsup_loss_split: draws must be positive");
  SplitLoss out;

  if (k == 1) {
    // L=: anchor, positive and negative drawn from one class c ~ nu.
    const ClassPrior nu = nu_distribution(model.prior());
    auto eq = chunked_estimate(draws, seed, [&](CounterRng& rng) {
      const int c = nu.sample(rng);
      const Vec fx = encoder.apply(model.sample_point(c, rng));
      const Vec fp = encoder.apply(model.sample_point(c, rng));
      const Vec fn = encoder.apply(model.sample_point(c, rng));
      const double m = dot(fx, sub(fp, fn));
      MarginLossKind k1 = kind;
      k1.ways = 1;
      return margin_loss(k1, std::span<const double>(&m, 1));
    });
    // L!=: ordered class pair conditioned on c+ != c-.
    auto neq = chunked_estimate(draws, seed + 1, [&](CounterRng& rng) {
      int cp = 0, cn = 0;
      do {
        cp = model.prior().sample(rng);
        cn = model.prior().sample(rng);
      } while (cp == cn);
      const Vec fx = encoder.apply(model.sample_point(cp, rng));
      const Vec fp = encoder.apply(model.sample_point(cp, rng));
      const Vec fn = encoder.apply(model.sample_point(cn, rng));
      const double m = dot(fx, sub(fp, fn));
      MarginLossKind k1 = kind;
      k1.ways = 1;
      return margin_loss(k1, std::span<const double>(&m, 1));
    });
    out.l_eq = to_estimate(eq);
    out.l_neq = to_estimate(neq);
    const double tau = collision_prob(model.prior());
    out.combined_check = tau * out.l_eq.value + (1.0 - tau) * out.l_neq.value;
    return out;
  }

  // General k. L!= conditions on |I+| < k and keeps only the non-colliding
  // arguments; the collision-conditional term keeps the colliding ones.
  auto draw_classes = [&](CounterRng& rng, std::vector<int>& negs, int& anchor) {
    anchor = model.prior().sample(rng);
    negs.resize(static_cast<size_t>(k));
    int collisions = 0;
    for (int i = 0; i < k; ++i) {
      negs[static_cast<size_t>(i)] = model.prior().sample(rng);
      if (negs[static_cast<size_t>(i)] == anchor) ++collisions;
    }
    return collisions;
  };

  auto neq = chunked_estimate(draws, seed + 1, [&](CounterRng& rng) {
    int anchor = 0, collisions = 0;
    std::vector<int> negs;
    do {
      collisions = draw_classes(rng, negs, anchor);
    } while (collisions == k);
    const Vec fx = encoder.apply(model.sample_point(anchor, rng));
    const Vec fp = encoder.apply(model.sample_point(anchor, rng));
    Vec margins;
    margins.reserve(negs.size());
    for (int c : negs) {
      if (c == anchor) continue;
      const Vec fn = encoder.apply(model.sample_point(c, rng));
      margins.push_back(dot(fx, sub(fp, fn)));
    }
    MarginLossKind km = kind;
    km.ways = static_cast<int>(margins.size());
    return margin_loss(km, margins);
  });

  auto eq = chunked_estimate(draws, seed, [&](CounterRng& rng) {
    int anchor = 0, collisions = 0;
    std::vector<int> negs;
    do {
      collisions = draw_classes(rng, negs, anchor);
    } while (collisions == 0);
    const Vec fx = encoder.apply(model.sample_point(anchor, rng));
    const Vec fp = encoder.apply(model.sample_point(anchor, rng));
    Vec margins;
    margins.reserve(static_cast<size_t>(collisions));
    for (int c : negs) {
      if (c != anchor) continue;
      const Vec fn = encoder.apply(model.sample_point(c, rng));
      margins.push_back(dot(fx, sub(fp, fn)));
    }
    MarginLossKind km = kind;
    km.ways = static_cast<int>(margins.size());
    return margin_loss(km, margins);
  });

  out.l_eq = to_estimate(eq);
  out.l_neq = to_estimate(neq);
  out.combined_check = std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace shiftbounds
