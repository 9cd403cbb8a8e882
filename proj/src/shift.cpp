#include "shiftbounds/shift.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "shiftbounds/complexity.hpp"

namespace shiftbounds {

namespace {
constexpr double kSqrt2OverPi = 0.79788456080286535587989211986876;
constexpr long long kChunk = 16384;
}  // namespace

ShiftProfile ShiftProfile::zero(int num_classes, int dim) {
  ShiftProfile p;
  p.deltas.assign(static_cast<size_t>(num_classes), Vec(static_cast<size_t>(dim), 0.0));
  p.epsilon = 0.0;
  return p;
}

ShiftProfile shift_from_means(const std::vector<Vec>& pre_means,
                              const std::vector<Vec>& down_means) {
  if (pre_means.size() != down_means.size())
    throw std::invalid_argument("shift_from_means: class count mismatch");
  ShiftProfile p;
  p.deltas.reserve(pre_means.size());
  for (size_t c = 0; c < pre_means.size(); ++c) {
    p.deltas.push_back(sub(pre_means[c], down_means[c]));
    p.epsilon = std::max(p.epsilon, norm(p.deltas.back()));
  }
  return p;
}

std::map<std::string, Vec> shift_deltas_from_means(const std::map<std::string, Vec>& pre,
                                                   const std::map<std::string, Vec>& down) {
  if (pre.size() != down.size())
    throw std::invalid_argument("shift_from_means: class key mismatch");
  std::map<std::string, Vec> deltas;
  for (const auto& [label, mu] : pre) {
    auto it = down.find(label);
    if (it == down.end())
      throw std::invalid_argument("shift_from_means: missing downstream class '" + label + "'");
    deltas.emplace(label, sub(mu, it->second));
  }
  return deltas;
}

double mean_shift_stat(const std::vector<Vec>& pre_means, const std::vector<Vec>& down_means) {
  if (pre_means.size() != down_means.size())
    throw std::invalid_argument("mean_shift_stat: class count mismatch");
  if (pre_means.empty()) throw std::invalid_argument("mean_shift_stat: no classes");
  double total = 0.0;
  for (size_t c = 0; c < pre_means.size(); ++c)
    total += norm(sub(pre_means[c], down_means[c]));
  return total / static_cast<double>(pre_means.size());
}

double mean_shift_stat(const std::map<std::string, Vec>& pre,
                       const std::map<std::string, Vec>& down) {
  const auto deltas = shift_deltas_from_means(pre, down);
  double total = 0.0;
  for (const auto& [label, d] : deltas) total += norm(d);
  return total / static_cast<double>(deltas.size());
}

BiasEstimate estimate_bias(const LatentModel& model, const LinearEncoder& encoder,
                           const MarginLossKind& kind, const ShiftProfile& shift,
                           int k, long long draws, std::uint64_t seed) {
  const int c_count = model.num_classes();
  if (static_cast<int>(shift.deltas.size()) != c_count)
    throw std::invalid_argument("estimate_bias: shift profile class count mismatch");
  if (k < 1) throw std::invalid_argument("estimate_bias: k must be >= 1");
  if (draws < 1) throw std::invalid_argument("estimate_bias: draws must be positive");

  // Everything below lives in encoded space; the ball radius is mapped
  // through the encoder's operator norm.
  std::vector<Vec> mu_pre;
  std::vector<Vec> delta_enc;
  std::vector<Vec> mu_down;
  double eps_used = 0.0;
  for (int c = 0; c < c_count; ++c) {
    mu_pre.push_back(encoder.apply(model.class_dist(c).mean));
    delta_enc.push_back(encoder.apply(shift.deltas[static_cast<size_t>(c)]));
    mu_down.push_back(sub(mu_pre.back(), delta_enc.back()));
    eps_used = std::max(eps_used, norm(delta_enc.back()));
  }
  eps_used = std::max(eps_used, encoder.operator_norm() * shift.epsilon);
  const int d_out = encoder.out_dim(model.dimension());

  RunningStat actual;
  std::vector<std::vector<RunningStat>> g_stats(
      static_cast<size_t>(c_count), std::vector<RunningStat>(static_cast<size_t>(d_out)));

  const long long chunks = (draws + kChunk - 1) / kChunk;
  for (long long ci = 0; ci < chunks; ++ci) {
    CounterRng rng = CounterRng::derive(seed, static_cast<std::uint64_t>(ci));
    const long long n = std::min(kChunk, draws - ci * kChunk);
    for (long long i = 0; i < n; ++i) {
      // class tuple conditioned on no collision with the anchor
      int anchor = 0;
      std::set<int> negs;
      for (;;) {
        anchor = model.prior().sample(rng);
        negs.clear();
        bool collided = false;
        for (int j = 0; j < k; ++j) {
          const int c = model.prior().sample(rng);
          if (c == anchor) {
            collided = true;
            break;
          }
          negs.insert(c);
        }
        if (!collided) break;
      }
      const Vec fx = encoder.apply(model.sample_point(anchor, rng));
      Vec margins;
      std::vector<int> neg_list(negs.begin(), negs.end());
      margins.reserve(neg_list.size());
      for (int c : neg_list)
        margins.push_back(dot(fx, sub(mu_down[static_cast<size_t>(anchor)],
                                      mu_down[static_cast<size_t>(c)])));
      MarginLossKind km = kind;
      km.ways = static_cast<int>(margins.size());
      const Vec grad = margin_loss_grad(km, margins);

      double term = 0.0;
      double grad_sum = 0.0;
      for (size_t j = 0; j < neg_list.size(); ++j) {
        const int c = neg_list[j];
        term += grad[j] * (dot(fx, delta_enc[static_cast<size_t>(anchor)]) -
                           dot(fx, delta_enc[static_cast<size_t>(c)]));
        grad_sum += grad[j];
      }
      actual.add(term);

      // per-class coefficient of delta_c in the same per-draw expression
      for (int c = 0; c < c_count; ++c) {
        double w = 0.0;
        if (c == anchor) w = grad_sum;
        for (size_t j = 0; j < neg_list.size(); ++j)
          if (neg_list[j] == c) w -= grad[j];
        for (int t = 0; t < d_out; ++t)
          g_stats[static_cast<size_t>(c)][static_cast<size_t>(t)].add(w * fx[static_cast<size_t>(t)]);
      }
    }
  }

  BiasEstimate out;
  out.t_actual = to_estimate(actual);
  out.epsilon_used = eps_used;
  out.g.assign(static_cast<size_t>(c_count), Vec(static_cast<size_t>(d_out), 0.0));
  double g_sum_norm = 0.0;
  double se_sq = 0.0;
  for (int c = 0; c < c_count; ++c) {
    for (int t = 0; t < d_out; ++t) {
      const auto& s = g_stats[static_cast<size_t>(c)][static_cast<size_t>(t)];
      out.g[static_cast<size_t>(c)][static_cast<size_t>(t)] = s.mean();
      se_sq += s.std_error() * s.std_error();
    }
    g_sum_norm += norm(out.g[static_cast<size_t>(c)]);
  }
  out.g_std_error = std::sqrt(se_sq);
  out.b_sup = eps_used * g_sum_norm;

  const double r = encoder.operator_norm() * model.norm_bound();
  out.ceilings = bias_ceilings(r, eps_used, loss_lipschitz(kind), model_sigma_f(model, encoder));
  return out;
}

Estimate bias_actual(const LatentModel& model, const LinearEncoder& encoder,
                     const MarginLossKind& kind, const ShiftProfile& shift,
                     long long draws, std::uint64_t seed) {
  return estimate_bias(model, encoder, kind, shift, 1, draws, seed).t_actual;
}

double bias_sup(const LatentModel& model, const LinearEncoder& encoder,
                const MarginLossKind& kind, double epsilon, long long draws,
                std::uint64_t seed) {
  if (epsilon < 0.0) throw std::invalid_argument("bias_sup: epsilon must be >= 0");
  if (epsilon == 0.0) return 0.0;
  ShiftProfile zero = ShiftProfile::zero(model.num_classes(), model.dimension());
  const BiasEstimate est = estimate_bias(model, encoder, kind, zero, 1, draws, seed);
  double coef = 0.0;
  for (const auto& g : est.g) coef += norm(g);
  return epsilon * coef;
}

std::map<std::string, double> bias_ceilings(double r, double epsilon, double lipschitz_l,
                                            double sigma_f) {
  if (r < 0.0 || epsilon < 0.0 || lipschitz_l < 0.0 || sigma_f < 0.0)
    throw std::invalid_argument("bias_ceilings: inputs must be nonnegative");
  return {
      {"lipschitz", 2.0 * lipschitz_l * r * epsilon},
      {"hinge", 2.0 * r * epsilon},
      {"logistic", 2.0 * r * epsilon},
      {"subgaussian", 2.0 * epsilon * lipschitz_l * sigma_f * kSqrt2OverPi},
  };
}

double estimate_sigma_f(const std::vector<Vec>& samples, int directions, std::uint64_t seed) {
  if (samples.size() < 100)
    throw std::invalid_argument("estimate_sigma_f: need at least 100 samples");
  if (directions < 1) throw std::invalid_argument("estimate_sigma_f: directions must be >= 1");
  const size_t d = samples.front().size();
  Vec mean(d, 0.0);
  for (const auto& s : samples) axpy(1.0, s, mean);
  for (double& v : mean) v /= static_cast<double>(samples.size());

  CounterRng rng = CounterRng::derive(seed, 0);
  double best = 0.0;
  for (int k = 0; k < directions; ++k) {
    Vec u(d);
    double n = 0.0;
    do {
      for (size_t i = 0; i < d; ++i) u[i] = rng.next_gaussian();
      n = norm(u);
    } while (n == 0.0);
    for (double& v : u) v /= n;
    double ss = 0.0;
    for (const auto& s : samples) {
      const double p = dot(u, s) - dot(u, mean);
      ss += p * p;
    }
    best = std::max(best, std::sqrt(ss / static_cast<double>(samples.size() - 1)));
  }
  return best;
}

double model_sigma_f(const LatentModel& model, const LinearEncoder& encoder) {
  double best = 0.0;
  for (int c = 0; c < model.num_classes(); ++c) {
    const auto& dist = model.class_dist(c);
    Mat second = encoder.is_identity() ? dist.covariance
                                       : sandwich(encoder.matrix, dist.covariance);
    const Vec m = encoder.apply(dist.mean);
    for (size_t i = 0; i < m.size(); ++i)
      for (size_t j = 0; j < m.size(); ++j)
        second(static_cast<int>(i), static_cast<int>(j)) += m[i] * m[j];
    best = std::max(best, spectral_norm(second, 1e-12, 10000));
  }
  return std::sqrt(best) / kSqrt2OverPi;  // sqrt(pi/2) * max directional L2 scale
}

HullProjection hull_project(const std::vector<Vec>& pre_means, const Vec& target,
                            double tolerance, int max_iters) {
  const size_t n = pre_means.size();
  if (n == 0) throw std::invalid_argument("hull_project: need at least one pretraining mean");
  for (const auto& m : pre_means)
    if (m.size() != target.size())
      throw std::invalid_argument("hull_project: dimension mismatch");

  HullProjection out;
  out.weights.assign(n, 0.0);
  out.weights[0] = 1.0;
  Vec point = pre_means[0];  // current hull point, sum_c w_c mu_c

  for (int it = 0; it < max_iters; ++it) {
    const Vec resid = sub(point, target);  // gradient in point space
    // scores_i = <grad, mu_i>
    double best_fw = 0.0, best_aw = 0.0;
    size_t fw = 0, aw = 0;
    bool first_fw = true, first_aw = true;
    for (size_t i = 0; i < n; ++i) {
      const double s = dot(resid, pre_means[i]);
      if (first_fw || s < best_fw) {
        best_fw = s;
        fw = i;
        first_fw = false;
      }
      if (out.weights[i] > 0.0 && (first_aw || s > best_aw)) {
        best_aw = s;
        aw = i;
        first_aw = false;
      }
    }
    const double grad_dot_point = dot(resid, point);
    const double gap = grad_dot_point - best_fw;
    out.gap = gap;
    out.iterations = it;
    if (gap <= tolerance) {
      out.projected = point;
      out.residual_norm = norm(resid);
      return out;
    }

    const double away_gap = best_aw - grad_dot_point;
    if (gap >= away_gap) {
      // Frank-Wolfe step toward vertex fw
      const Vec dir = sub(pre_means[fw], point);
      const double denom = squared_norm(dir);
      double step = denom > 0.0 ? -dot(resid, dir) / denom : 1.0;
      step = std::clamp(step, 0.0, 1.0);
      for (size_t i = 0; i < n; ++i) out.weights[i] *= 1.0 - step;
      out.weights[fw] += step;
      axpy(step, dir, point);
    } else {
      // away step from vertex aw
      const Vec dir = sub(point, pre_means[aw]);
      const double denom = squared_norm(dir);
      const double alpha = out.weights[aw];
      const double step_max = alpha >= 1.0 ? 0.0 : alpha / (1.0 - alpha);
      double step = denom > 0.0 ? -dot(resid, dir) / denom : 0.0;
      step = std::clamp(step, 0.0, step_max);
      for (size_t i = 0; i < n; ++i) out.weights[i] *= 1.0 + step;
      out.weights[aw] -= step;
      axpy(step, dir, point);
    }
    // numeric hygiene on the simplex
    double wsum = 0.0;
    for (double& w : out.weights) {
      if (w < 0.0) w = 0.0;
      wsum += w;
    }
    if (wsum > 0.0)
      for (double& w : out.weights) w /= wsum;
  }
  throw std::runtime_error("hull_project: no convergence in " + std::to_string(max_iters) +
                           " iterations (gap " + std::to_string(out.gap) + ")");
}

double novel_class_bias_bound(double in_dist_bias, double residual_norm, double lipschitz_l,
                              double r) {
  if (residual_norm < 0.0 || lipschitz_l < 0.0 || r < 0.0)
    throw std::invalid_argument("novel_class_bias_bound: inputs must be nonnegative");
  return in_dist_bias + 2.0 * lipschitz_l * r * residual_norm;
}

}  // namespace shiftbounds
