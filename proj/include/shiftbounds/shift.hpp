#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shiftbounds/encoder.hpp"
#include "shiftbounds/latent_model.hpp"
#include "shiftbounds/losses.hpp"

namespace shiftbounds {

/// Per-class mean shift vectors delta_c (pretraining mean minus downstream
/// mean) with the ball radius bounding them.
struct ShiftProfile {
  std::vector<Vec> deltas;
  double epsilon = 0.0;

  static ShiftProfile zero(int num_classes, int dim);
};

/// deltas = pre - down per class; epsilon = max delta norm.
ShiftProfile shift_from_means(const std::vector<Vec>& pre_means,
                              const std::vector<Vec>& down_means);
std::map<std::string, Vec> shift_deltas_from_means(const std::map<std::string, Vec>& pre,
                                                   const std::map<std::string, Vec>& down);

/// Mean-shift statistic: average per-class Euclidean distance between the
/// two mean families.
double mean_shift_stat(const std::vector<Vec>& pre_means, const std::vector<Vec>& down_means);
double mean_shift_stat(const std::map<std::string, Vec>& pre, const std::map<std::string, Vec>& down);

/// Bias of the shifted-mean bound. t_actual is the expectation at the
/// profile's actual deltas; b_sup the exact supremum over per-class
/// epsilon-balls given the estimated coefficient vectors g_c (linearity in
/// each delta_c makes the sup epsilon * sum_c ||g_c||). Both come from the
/// same draw stream, so |t_actual| <= b_sup holds by Cauchy-Schwarz.
struct BiasEstimate {
  Estimate t_actual;
  double b_sup = 0.0;
  std::vector<Vec> g;        // per-class coefficient estimates
  double g_std_error = 0.0;  // stacked-vector standard error of g
  double epsilon_used = 0.0;
  std::map<std::string, double> ceilings;
};

BiasEstimate estimate_bias(const LatentModel& model, const LinearEncoder& encoder,
                           const MarginLossKind& kind, const ShiftProfile& shift,
                           int k, long long draws, std::uint64_t seed);

Estimate bias_actual(const LatentModel& model, const LinearEncoder& encoder,
                     const MarginLossKind& kind, const ShiftProfile& shift,
                     long long draws, std::uint64_t seed);

/// Worst-case bias over the epsilon-balls around the (unshifted) class
/// means: epsilon * sum_c ||g_c|| with g_c estimated at the pretraining
/// means.
double bias_sup(const LatentModel& model, const LinearEncoder& encoder,
                const MarginLossKind& kind, double epsilon, long long draws,
                std::uint64_t seed);

/// Closed-form ceilings: lipschitz 2LR*eps, hinge/logistic 2R*eps,
/// subgaussian 2*eps*L*sigma_f*sqrt(2/pi).
std::map<std::string, double> bias_ceilings(double r, double epsilon, double lipschitz_l,
                                            double sigma_f);

/// Sample proxy for the sub-Gaussian width: maximum over random unit
/// directions of the empirical projection standard deviation. Calibrated for
/// Gaussian data (converges to the top directional standard deviation).
double estimate_sigma_f(const std::vector<Vec>& samples, int directions, std::uint64_t seed);

/// Certified sigma_f of a Gaussian model: sqrt(pi/2) * max_c
/// sqrt(lambda_max(E_c[f f^T])), the smallest scale with
/// E|u^T f(x)| <= sigma_f * sqrt(2/pi) for every class and direction.
double model_sigma_f(const LatentModel& model, const LinearEncoder& encoder);

/// Projection of a target mean onto the convex hull of pretraining means.
struct HullProjection {
  Vec weights;
  Vec projected;
  double residual_norm = 0.0;
  double gap = 0.0;
  int iterations = 0;
};

/// Frank-Wolfe with away steps on 0.5*||sum_c w_c mu_c - target||^2 over the
/// simplex; stops once the duality gap falls below `tolerance`. Throws
/// std::runtime_error (reporting the last gap) if max_iters is exhausted.
HullProjection hull_project(const std::vector<Vec>& pre_means, const Vec& target,
                            double tolerance, int max_iters);

/// Bias cap for a novel class: in-hull bias plus 2LR times the hull residual.
double novel_class_bias_bound(double in_dist_bias, double residual_norm, double lipschitz_l,
                              double r);

}  // namespace shiftbounds
