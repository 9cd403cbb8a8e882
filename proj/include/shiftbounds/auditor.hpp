#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "shiftbounds/classifier.hpp"
#include "shiftbounds/complexity.hpp"
#include "shiftbounds/shift.hpp"

namespace shiftbounds {

/// Result of fitting the empirical-minimizer proxy: the best-loss iterate of
/// projected subgradient descent on the empirical contrastive objective,
/// together with the training tuples (the Rademacher term is evaluated on
/// the same set) and the loss trace.
struct FitResult {
  LinearEncoder encoder;
  TupleDataset train_set;
  double best_loss = 0.0;
  std::vector<double> loss_trace;
};

FitResult fit_encoder(const LatentModel& model, int k, const MarginLossKind& kind,
                      int sample_size, int steps, double step_size, double frob_bound,
                      std::uint64_t seed);

enum class Verdict { holds, violated, inconclusive };

std::string verdict_name(Verdict v);

/// Every component of one theorem's inequality, with Monte Carlo standard
/// errors. slack = rhs_total - lhs; the verdict is inconclusive inside the
/// 3-combined-SE band, otherwise holds/violated by sign.
struct BoundReport {
  std::string theorem;
  Estimate lhs;
  std::vector<std::pair<std::string, Estimate>> rhs_terms;
  Estimate rhs_total;
  double slack = 0.0;
  Verdict verdict = Verdict::inconclusive;
  std::map<std::string, double> constants;
};

struct AuditOptions {
  MarginLoss loss = MarginLoss::hinge;
  int k = 1;
  long long draws = 100000;
  int sample_size = 200;  // M, training tuples for the fitted encoder
  int fit_steps = 1000;
  double fit_step_size = 0.05;
  double frob_bound = 0.0;  // 0 => sqrt(embedding dimension)
  long long rademacher_draws = 256;
  double confidence_delta = 0.05;
  std::uint64_t seed = 0;
};

/// k=1 bound: L_sup^{mu'}(f) <= (L_un(f) - tau)/(1-tau) + Gen_M/(1-tau) - bias.
/// The gating verdict subtracts the convexity-exact actual bias; the printed
/// sup-form RHS is recorded as a diagnostic constant.
BoundReport audit_theorem_4_1(const LatentModel& model, const ShiftProfile& shift,
                              const AuditOptions& options);

/// k=1 class-collision bound: L_sup^{mu'} <= L_un^{!=} + beta*s(f)
/// + eta*Gen_M - bias, beta = c'*tau/(1-tau), eta = 1/(1-tau).
BoundReport audit_theorem_4_5(const LatentModel& model, const ShiftProfile& shift,
                              const AuditOptions& options);

/// k-negative bound with exact task reweighting:
/// E_{T~D}[rho_min+/p_max * L_sup^{mu_down}(T, f)] <=
/// (1-tau_0)/(1-tau_k) L^{!=} + c0*k*tau_1/(1-tau_k) s(f)
/// + Gen_M/(1-tau_k) - bias. Requires C^{k+1} <= 1e6.
BoundReport audit_theorem_B_1(const LatentModel& model, const ShiftProfile& shift,
                              const AuditOptions& options);

/// L_sup^{mu'} for k=1 via the ordered class-pair route (the form the Jensen
/// chain produces): E_{c+ != c-} E_{x ~ D_{c+}}[ l(f(x)^T(mu'_{c+} - mu'_{c-})) ].
Estimate sup_loss_mu_down_pairs(const LatentModel& model, const LinearEncoder& encoder,
                                const ShiftProfile& shift, const MarginLossKind& kind,
                                long long draws, std::uint64_t seed);

/// Same quantity via task sampling (distinct pairs, uniform label); the two
/// routes agree in expectation.
Estimate sup_loss_mu_down_tasks(const LatentModel& model, const LinearEncoder& encoder,
                                const ShiftProfile& shift, const MarginLossKind& kind,
                                long long draws, std::uint64_t seed);

}  // namespace shiftbounds
