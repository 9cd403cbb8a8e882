#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shiftbounds/encoder.hpp"
#include "shiftbounds/latent_model.hpp"
#include "shiftbounds/rng.hpp"

namespace shiftbounds {

enum class MarginLoss { hinge, logistic };

/// Base convention for the logistic loss. The theorem chains need the log2
/// form (so the 1-way loss at 0 equals 1); the Lipschitz ceilings use the
/// natural form (so |l'| <= 1). Both are exposed behind this flag.
enum class LogBase { natural, two };

struct MarginLossKind {
  MarginLoss kind = MarginLoss::hinge;
  int ways = 1;
  LogBase base = LogBase::two;
};

/// t-way margin loss on the margin vector v (length = kind.ways).
/// hinge: max(0, 1 + max_i(-v_i)); logistic: log(1 + sum_i exp(-v_i)).
double margin_loss(const MarginLossKind& kind, std::span<const double> v);

/// Subgradient of margin_loss. The hinge subgradient at the kink is fixed to
/// -1 on the active coordinate (lowest index among ties).
Vec margin_loss_grad(const MarginLossKind& kind, std::span<const double> v);

/// l_t(0): loss of the all-zero margin vector (1 for hinge and for 1-way
/// log2 logistic).
double loss_at_zero(const MarginLossKind& kind);

/// Upper bound on the loss when every margin magnitude is capped by 2R^2.
double loss_upper_bound(const MarginLossKind& kind, double r);

/// Lipschitz constant of the loss as a map R^t -> R (l2 metric).
double loss_lipschitz(const MarginLossKind& kind);

/// Class-collision constant c' of the deviation lemma: sqrt(2) for hinge,
/// sqrt(2)/ln 2 for log2 logistic, sqrt(2) for natural logistic.
double collision_constant(const MarginLossKind& kind);

struct InfoNCEConfig {
  double temperature = 1.0;
  bool exclude_self = true;  // drop the m = i term from the denominator
};

/// NT-Xent over a batch of 2N embeddings arranged as consecutive positive
/// pairs (0,1), (2,3), ... Returns the mean of the 2N ordered pair losses.
double ntxent_batch(const std::vector<Vec>& embeddings, const InfoNCEConfig& config);

/// Monte Carlo estimate of the population contrastive loss
/// E[ l({f(x)^T (f(x+) - f(x-_i))}_{i=1..k}) ].
Estimate unsup_loss(const LatentModel& model, const LinearEncoder& encoder,
                    const MarginLossKind& kind, int k, long long draws,
                    std::uint64_t seed);

/// Class-collision split of the contrastive loss.
/// l_eq: k=1 loss with anchor/positive/negative all drawn from one class
///       c ~ nu; for k > 1, the collision-conditional loss restricted to the
///       colliding arguments (given I+ nonempty).
/// l_neq: loss conditioned on |I+| < k with arguments restricted to the
///        non-colliding negatives.
/// combined_check: tau*l_eq + (1-tau)*l_neq, defined for k=1 only (NaN
///                 otherwise).
struct SplitLoss {
  Estimate l_eq;
  Estimate l_neq;
  double combined_check = 0.0;
};

SplitLoss unsup_loss_split(const LatentModel& model, const LinearEncoder& encoder,
                           const MarginLossKind& kind, int k, long long draws,
                           std::uint64_t seed);

}  // namespace shiftbounds
