#include "shiftbounds/auditor.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace shiftbounds {

namespace {

constexpr long long kChunk = 16384;

MarginLossKind audit_kind(const AuditOptions& o, int ways) {
  // Theorem chains need l_1(0) = 1, so logistic runs in the log2 convention.
  return MarginLossKind{o.loss, ways, LogBase::two};
}

double empirical_loss(const TupleDataset& set, const LinearEncoder& enc,
                      const MarginLossKind& kind) {
  double total = 0.0;
  for (const auto& tuple : set.tuples) {
    const Vec fx = enc.apply(tuple[0]);
    const Vec fp = enc.apply(tuple[1]);
    Vec margins(tuple.size() - 2);
    for (size_t i = 2; i < tuple.size(); ++i)
      margins[i - 2] = dot(fx, sub(fp, enc.apply(tuple[i])));
    MarginLossKind km = kind;
    km.ways = static_cast<int>(margins.size());
    total += margin_loss(km, margins);
  }
  return total / static_cast<double>(set.tuples.size());
}

Mat loss_subgradient(const TupleDataset& set, const LinearEncoder& enc,
                     const MarginLossKind& kind) {
  const int d_out = enc.matrix.rows;
  const int d_in = enc.matrix.cols;
  Mat grad(d_out, d_in);
  for (const auto& tuple : set.tuples) {
    const Vec fx = enc.apply(tuple[0]);
    const Vec fp = enc.apply(tuple[1]);
    const size_t k = tuple.size() - 2;
    Vec margins(k);
    std::vector<Vec> fn(k);
    for (size_t i = 0; i < k; ++i) {
      fn[i] = enc.apply(tuple[i + 2]);
      margins[i] = dot(fx, sub(fp, fn[i]));
    }
    MarginLossKind km = kind;
    km.ways = static_cast<int>(k);
    const Vec g = margin_loss_grad(km, margins);
    // d v_i / dW = (W u_i) x^T + (W x) u_i^T with u_i = x+ - x-_i
    for (size_t i = 0; i < k; ++i) {
      if (g[i] == 0.0) continue;
      const Vec u = sub(tuple[1], tuple[i + 2]);
      const Vec wu = sub(fp, fn[i]);
      for (int a = 0; a < d_out; ++a)
        for (int b = 0; b < d_in; ++b)
          grad(a, b) += g[i] * (wu[static_cast<size_t>(a)] * tuple[0][static_cast<size_t>(b)] +
                                fx[static_cast<size_t>(a)] * u[static_cast<size_t>(b)]);
    }
  }
  const double inv = 1.0 / static_cast<double>(set.tuples.size());
  for (double& v : grad.data) v *= inv;
  return grad;
}

}  // namespace

FitResult fit_encoder(const LatentModel& model, int k, const MarginLossKind& kind,
                      int sample_size, int steps, double step_size, double frob_bound,
                      std::uint64_t seed) {
  if (sample_size < 10) throw std::invalid_argument("fit_encoder: sample_size must be >= 10");
  if (steps < 0) throw std::invalid_argument("fit_encoder: steps must be >= 0");
  const int d = model.dimension();
  const double bound = frob_bound > 0.0 ? frob_bound : std::sqrt(static_cast<double>(d));

  FitResult fit;
  fit.train_set = draw_tuple_dataset(model, k, sample_size, seed);

  // seeded Gaussian init on the Frobenius sphere
  CounterRng rng = CounterRng::derive(seed, 0x1a17ULL);
  Mat w(d, d);
  for (double& v : w.data) v = rng.next_gaussian();
  const double f = frobenius_norm(w);
  for (double& v : w.data) v *= bound / f;
  LinearEncoder enc = LinearEncoder::linear(std::move(w), bound);

  double loss = empirical_loss(fit.train_set, enc, kind);
  const double initial = loss;
  fit.encoder = enc;
  fit.best_loss = loss;
  fit.loss_trace.push_back(loss);
  for (int s = 0; s < steps; ++s) {
    const Mat g = loss_subgradient(fit.train_set, enc, kind);
    for (size_t i = 0; i < enc.matrix.data.size(); ++i)
      enc.matrix.data[i] -= step_size * g.data[i];
    enc.project_frobenius();
    loss = empirical_loss(fit.train_set, enc, kind);
    fit.loss_trace.push_back(loss);
    if (loss > 10.0 * std::max(initial, 1e-12))
      throw std::runtime_error("fit_encoder: diverged (loss grew 10x over initial)");
    if (loss < fit.best_loss) {
      fit.best_loss = loss;
      fit.encoder = enc;
    }
  }
  return fit;
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::violated: return "violated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

namespace {

Verdict decide(double slack, double combined_se) {
  if (std::fabs(slack) < 3.0 * combined_se) return Verdict::inconclusive;
  return slack >= 0.0 ? Verdict::holds : Verdict::violated;
}

std::vector<Vec> down_means_encoded(const LatentModel& model, const LinearEncoder& enc,
                                    const ShiftProfile& shift) {
  std::vector<Vec> means;
  means.reserve(static_cast<size_t>(model.num_classes()));
  for (int c = 0; c < model.num_classes(); ++c)
    means.push_back(sub(enc.apply(model.class_dist(c).mean),
                        enc.apply(shift.deltas[static_cast<size_t>(c)])));
  return means;
}

}  // namespace

Estimate sup_loss_mu_down_pairs(const LatentModel& model, const LinearEncoder& encoder,
                                const ShiftProfile& shift, const MarginLossKind& kind,
                                long long draws, std::uint64_t seed) {
  const auto means = down_means_encoded(model, encoder, shift);
  RunningStat stat;
  const long long chunks = (draws + kChunk - 1) / kChunk;
  for (long long ci = 0; ci < chunks; ++ci) {
    CounterRng rng = CounterRng::derive(seed, static_cast<std::uint64_t>(ci));
    const long long n = std::min(kChunk, draws - ci * kChunk);
    for (long long i = 0; i < n; ++i) {
      int cp = 0, cn = 0;
      do {
        cp = model.prior().sample(rng);
        cn = model.prior().sample(rng);
      } while (cp == cn);
      const Vec fx = encoder.apply(model.sample_point(cp, rng));
      const double m = dot(fx, sub(means[static_cast<size_t>(cp)], means[static_cast<size_t>(cn)]));
      MarginLossKind km = kind;
      km.ways = 1;
      stat.add(margin_loss(km, std::span<const double>(&m, 1)));
    }
  }
  return to_estimate(stat);
}

Estimate sup_loss_mu_down_tasks(const LatentModel& model, const LinearEncoder& encoder,
                                const ShiftProfile& shift, const MarginLossKind& kind,
                                long long draws, std::uint64_t seed) {
  const auto means = down_means_encoded(model, encoder, shift);
  RunningStat stat;
  const long long chunks = (draws + kChunk - 1) / kChunk;
  for (long long ci = 0; ci < chunks; ++ci) {
    CounterRng rng = CounterRng::derive(seed, static_cast<std::uint64_t>(ci));
    const long long n = std::min(kChunk, draws - ci * kChunk);
    for (long long i = 0; i < n; ++i) {
      const SampledTask st = sample_task_distinct(model.prior(), 1, rng);
      const int slot = rng.next_uniform() < 0.5 ? 0 : 1;
      const int c = st.task.class_indices[static_cast<size_t>(slot)];
      const int other = st.task.class_indices[static_cast<size_t>(1 - slot)];
      const Vec fx = encoder.apply(model.sample_point(c, rng));
      const double m = dot(fx, sub(means[static_cast<size_t>(c)], means[static_cast<size_t>(other)]));
      MarginLossKind km = kind;
      km.ways = 1;
      stat.add(margin_loss(km, std::span<const double>(&m, 1)));
    }
  }
  return to_estimate(stat);
}

namespace {

struct CommonAudit {
  FitResult fit;
  double r_eff = 0.0;
  Estimate lun;
  BiasEstimate bias;
  RademacherEstimate rad;
  GenBound gen;
  MarginLossKind kind;
};

CommonAudit run_common(const LatentModel& model, const ShiftProfile& shift,
                       const AuditOptions& o, int k) {
  CommonAudit c;
  c.kind = audit_kind(o, k);
  c.fit = fit_encoder(model, k, c.kind, o.sample_size, o.fit_steps, o.fit_step_size,
                      o.frob_bound, o.seed + 11);
  c.r_eff = c.fit.encoder.operator_norm() * model.norm_bound();
  c.lun = unsup_loss(model, c.fit.encoder, c.kind, k, o.draws, o.seed + 21);
  c.bias = estimate_bias(model, c.fit.encoder, c.kind, shift, k, o.draws, o.seed + 31);
  c.rad = rademacher_linear(c.fit.train_set, c.fit.encoder.frob_bound,
                            c.fit.encoder.matrix.rows, o.rademacher_draws, o.seed + 41);
  c.gen = gen_bound(c.rad, c.r_eff, loss_upper_bound(c.kind, c.r_eff),
                    loss_lipschitz(c.kind), o.confidence_delta);
  return c;
}

double gen_rad_se(const CommonAudit& c) {
  // SE of Gen_M inherited from the Rademacher mean through its linear term
  return c.gen.constants.at("contraction") * loss_lipschitz(c.kind) * c.r_eff *
         std::sqrt(static_cast<double>(c.rad.k)) * c.rad.std_error /
         static_cast<double>(c.rad.sample_size);
}

}  // namespace

BoundReport audit_theorem_4_1(const LatentModel& model, const ShiftProfile& shift,
                              const AuditOptions& options) {
  if (options.k != 1) throw std::invalid_argument("audit_theorem_4_1: requires k = 1");
  CommonAudit c = run_common(model, shift, options, 1);
  const double tau = collision_prob(model.prior());
  const double eta = 1.0 / (1.0 - tau);

  BoundReport rep;
  rep.theorem = "T4.1";
  rep.lhs = sup_loss_mu_down_pairs(model, c.fit.encoder, shift, c.kind, options.draws,
                                   options.seed + 51);

  const double rhs = eta * (c.lun.value - tau) + eta * c.gen.value - c.bias.t_actual.value;
  const double rhs_se = std::sqrt(
      eta * eta * c.lun.std_error * c.lun.std_error +
      eta * eta * gen_rad_se(c) * gen_rad_se(c) +
      c.bias.t_actual.std_error * c.bias.t_actual.std_error);
  rep.rhs_terms = {
      {"unsup_loss", c.lun},
      {"gen_bound", Estimate{c.gen.value, gen_rad_se(c), c.rad.draws}},
      {"bias_actual", c.bias.t_actual},
      {"bias_sup", Estimate{c.bias.b_sup, c.bias.g_std_error * c.bias.epsilon_used, options.draws}},
  };
  rep.rhs_total = Estimate{rhs, rhs_se, options.draws};
  rep.slack = rhs - rep.lhs.value;
  const double cse = std::sqrt(rhs_se * rhs_se + rep.lhs.std_error * rep.lhs.std_error);
  rep.verdict = decide(rep.slack, cse);
  rep.constants = {
      {"tau", tau},
      {"eta", eta},
      {"r", c.r_eff},
      {"epsilon", c.bias.epsilon_used},
      {"fit_loss", c.fit.best_loss},
      {"rhs_supform", eta * (c.lun.value - tau) + eta * c.gen.value - c.bias.b_sup},
      {"combined_se", cse},
      {"log2_logistic", options.loss == MarginLoss::logistic ? 1.0 : 0.0},
  };
  return rep;
}

BoundReport audit_theorem_4_5(const LatentModel& model, const ShiftProfile& shift,
                              const AuditOptions& options) {
  if (options.k != 1) throw std::invalid_argument("audit_theorem_4_5: requires k = 1");
  CommonAudit c = run_common(model, shift, options, 1);
  const double tau = collision_prob(model.prior());
  const double eta = 1.0 / (1.0 - tau);
  const double cprime = collision_constant(c.kind);
  const double beta = cprime * tau / (1.0 - tau);

  const SplitLoss split =
      unsup_loss_split(model, c.fit.encoder, c.kind, 1, options.draws, options.seed + 61);
  const IntraClassStats stats =
      intra_class_deviation(model, c.fit.encoder, options.draws, options.seed + 71);

  BoundReport rep;
  rep.theorem = "T4.5";
  rep.lhs = sup_loss_mu_down_pairs(model, c.fit.encoder, shift, c.kind, options.draws,
                                   options.seed + 51);

  const double rhs = split.l_neq.value + beta * stats.s_value + eta * c.gen.value -
                     c.bias.t_actual.value;
  const double rhs_se = std::sqrt(
      split.l_neq.std_error * split.l_neq.std_error +
      beta * beta * stats.s_std_error * stats.s_std_error +
      eta * eta * gen_rad_se(c) * gen_rad_se(c) +
      c.bias.t_actual.std_error * c.bias.t_actual.std_error);
  rep.rhs_terms = {
      {"l_neq", split.l_neq},
      {"l_eq", split.l_eq},
      {"s_value", Estimate{stats.s_value, stats.s_std_error, options.draws}},
      {"gen_bound", Estimate{c.gen.value, gen_rad_se(c), c.rad.draws}},
      {"bias_actual", c.bias.t_actual},
      {"bias_sup", Estimate{c.bias.b_sup, c.bias.g_std_error * c.bias.epsilon_used, options.draws}},
      {"unsup_loss", c.lun},
  };
  rep.rhs_total = Estimate{rhs, rhs_se, options.draws};
  rep.slack = rhs - rep.lhs.value;
  const double cse = std::sqrt(rhs_se * rhs_se + rep.lhs.std_error * rep.lhs.std_error);
  rep.verdict = decide(rep.slack, cse);
  rep.constants = {
      {"tau", tau},
      {"eta", eta},
      {"beta", beta},
      {"c_prime", cprime},
      {"r", c.r_eff},
      {"epsilon", c.bias.epsilon_used},
      {"fit_loss", c.fit.best_loss},
      {"rhs_supform", split.l_neq.value + beta * stats.s_value + eta * c.gen.value - c.bias.b_sup},
      {"combined_se", cse},
      {"combined_check", split.combined_check},
      {"log2_logistic", options.loss == MarginLoss::logistic ? 1.0 : 0.0},
  };
  return rep;
}

BoundReport audit_theorem_B_1(const LatentModel& model, const ShiftProfile& shift,
                              const AuditOptions& options) {
  const int k = options.k;
  if (k < 1) throw std::invalid_argument("audit_theorem_B_1: k must be >= 1");
  CommonAudit c = run_common(model, shift, options, k);
  const double tau1 = collision_prob(model.prior());
  const double tau_k = collision_prob_k(model.prior(), k);
  const double tau0 = all_collide_prob(model.prior(), k);
  const double alpha = (1.0 - tau0) / (1.0 - tau_k);
  const double inv = 1.0 / (1.0 - tau_k);
  const double c0 = collision_constant(c.kind);
  const double beta = c0 * static_cast<double>(k) * tau1 * inv;

  const SplitLoss split =
      unsup_loss_split(model, c.fit.encoder, c.kind, k, options.draws, options.seed + 61);
  const IntraClassStats stats =
      intra_class_deviation(model, c.fit.encoder, options.draws, options.seed + 71);

  // exact task-weight table from one enumeration pass
  const auto tuples = enumerate_tuples(model.prior(), k);
  std::map<std::vector<int>, std::map<int, double>> anchor_mass;
  std::map<std::vector<int>, double> task_mass;
  for (const auto& t : tuples) {
    if (!t.collision_indices.empty()) continue;
    anchor_mass[t.distinct_classes][t.classes[0]] += t.probability;
    task_mass[t.distinct_classes] += t.probability;
  }
  std::map<std::vector<int>, double> weight;  // rho_min+ / p_max per task
  for (const auto& [q, mass] : task_mass) {
    double rho_min = 1.0;
    for (int cls : q) {
      const auto& am = anchor_mass[q];
      const auto it = am.find(cls);
      rho_min = std::min(rho_min, it == am.end() ? 0.0 : it->second / mass);
    }
    const double p_max = 1.0 / static_cast<double>(q.size());  // uniform D_T
    weight[q] = rho_min / p_max;
  }

  const auto means = down_means_encoded(model, c.fit.encoder, shift);
  RunningStat lhs_stat;
  const long long chunks = (options.draws + kChunk - 1) / kChunk;
  for (long long ci = 0; ci < chunks; ++ci) {
    CounterRng rng = CounterRng::derive(options.seed + 51, static_cast<std::uint64_t>(ci));
    const long long n = std::min(kChunk, options.draws - ci * kChunk);
    for (long long i = 0; i < n; ++i) {
      const SampledTask st = sample_task_D(model.prior(), k, rng);
      const auto wit = weight.find(st.task.class_indices);
      if (wit == weight.end())
        throw std::runtime_error("audit_theorem_B_1: sampled task missing from enumeration");
      const int slot = static_cast<int>(rng.next_uniform() *
                                        static_cast<double>(st.task.class_indices.size()));
      const int cls = st.task.class_indices[static_cast<size_t>(
          std::min<size_t>(static_cast<size_t>(slot), st.task.class_indices.size() - 1))];
      const Vec fx = c.fit.encoder.apply(model.sample_point(cls, rng));
      Vec margins;
      margins.reserve(st.task.class_indices.size() - 1);
      for (int other : st.task.class_indices) {
        if (other == cls) continue;
        margins.push_back(dot(fx, sub(means[static_cast<size_t>(cls)],
                                      means[static_cast<size_t>(other)])));
      }
      MarginLossKind km = c.kind;
      km.ways = static_cast<int>(margins.size());
      lhs_stat.add(wit->second * margin_loss(km, margins));
    }
  }

  BoundReport rep;
  rep.theorem = "TB.1";
  rep.lhs = to_estimate(lhs_stat);

  const double rhs = alpha * split.l_neq.value + beta * stats.s_value + inv * c.gen.value -
                     c.bias.t_actual.value;
  const double rhs_se = std::sqrt(
      alpha * alpha * split.l_neq.std_error * split.l_neq.std_error +
      beta * beta * stats.s_std_error * stats.s_std_error +
      inv * inv * gen_rad_se(c) * gen_rad_se(c) +
      c.bias.t_actual.std_error * c.bias.t_actual.std_error);
  rep.rhs_terms = {
      {"l_neq", split.l_neq},
      {"s_value", Estimate{stats.s_value, stats.s_std_error, options.draws}},
      {"gen_bound", Estimate{c.gen.value, gen_rad_se(c), c.rad.draws}},
      {"bias_actual", c.bias.t_actual},
      {"bias_sup", Estimate{c.bias.b_sup, c.bias.g_std_error * c.bias.epsilon_used, options.draws}},
      {"unsup_loss", c.lun},
  };
  rep.rhs_total = Estimate{rhs, rhs_se, options.draws};
  rep.slack = rhs - rep.lhs.value;
  const double cse = std::sqrt(rhs_se * rhs_se + rep.lhs.std_error * rep.lhs.std_error);
  rep.verdict = decide(rep.slack, cse);
  rep.constants = {
      {"tau_1", tau1},
      {"tau_k", tau_k},
      {"tau_0", tau0},
      {"alpha", alpha},
      {"beta", beta},
      {"eta", inv},
      {"c_0", c0},
      {"k", static_cast<double>(k)},
      {"r", c.r_eff},
      {"epsilon", c.bias.epsilon_used},
      {"fit_loss", c.fit.best_loss},
      {"rhs_supform", alpha * split.l_neq.value + beta * stats.s_value + inv * c.gen.value -
                          inv * c.bias.b_sup},
      {"combined_se", cse},
      {"log2_logistic", options.loss == MarginLoss::logistic ? 1.0 : 0.0},
  };
  return rep;
}

}  // namespace shiftbounds
