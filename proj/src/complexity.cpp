#include "shiftbounds/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace shiftbounds {

namespace {
constexpr long long kChunk = 16384;
}

double spectral_norm(const Mat& m, double tolerance, int max_iters) {
  if (m.rows != m.cols) throw std::invalid_argument("spectral_norm: matrix not square");
  if (!is_symmetric(m, 1e-8)) throw std::invalid_argument("spectral_norm: matrix not symmetric");
  const int n = m.rows;
  if (n == 0) return 0.0;
  // deterministic start with a mild tilt so no eigenvector is orthogonal by
  // symmetry accident
  Vec v(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = 1.0 + 1e-3 * static_cast<double>(i);
  double vn = norm(v);
  for (double& x : v) x /= vn;
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vec w = matvec(m, v);
    const double wn = norm(w);
    if (wn == 0.0) return 0.0;  // started in the null space of a PSD matrix: top eig reached 0
    for (double& x : w) x /= wn;
    const double next = dot(w, matvec(m, w));
    v = std::move(w);
    if (std::fabs(next - lambda) <= tolerance * std::max(1.0, std::fabs(next))) return next;
    lambda = next;
  }
  throw std::runtime_error("spectral_norm: power iteration did not converge");
}

IntraClassStats intra_class_deviation(const LatentModel& model, const LinearEncoder& encoder,
                                      long long draws, std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("intra_class_deviation: draws must be positive");
  const ClassPrior nu = nu_distribution(model.prior());
  IntraClassStats out;
  out.per_class.resize(static_cast<size_t>(model.num_classes()));
  double s = 0.0;
  double var = 0.0;
  for (int c = 0; c < model.num_classes(); ++c) {
    const Mat cov = encoder.is_identity()
                        ? model.class_dist(c).covariance
                        : sandwich(encoder.matrix, model.class_dist(c).covariance);
    const double top = spectral_norm(cov, 1e-12, 10000);
    RunningStat stat;
    const long long chunks = (draws + kChunk - 1) / kChunk;
    for (long long ci = 0; ci < chunks; ++ci) {
      CounterRng rng = CounterRng::derive(seed + static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(ci));
      const long long n = std::min(kChunk, draws - ci * kChunk);
      RunningStat local;
      for (long long i = 0; i < n; ++i)
        local.add(norm(encoder.apply(model.sample_point(c, rng))));
      stat.merge(local);
    }
    auto& slot = out.per_class[static_cast<size_t>(c)];
    slot.cov_spectral_norm = top;
    slot.mean_norm = to_estimate(stat);
    const double w = nu.prob(c) * std::sqrt(top);
    s += w * slot.mean_norm.value;
    var += w * w * slot.mean_norm.std_error * slot.mean_norm.std_error;
  }
  out.s_value = s;
  out.s_std_error = std::sqrt(var);
  return out;
}

TupleDataset draw_tuple_dataset(const LatentModel& model, int k, int sample_size,
                                std::uint64_t seed) {
  if (sample_size < 1) throw std::invalid_argument("draw_tuple_dataset: empty sample");
  TupleDataset set;
  set.k = k;
  set.tuples.reserve(static_cast<size_t>(sample_size));
  for (int j = 0; j < sample_size; ++j) {
    CounterRng rng = CounterRng::derive(seed, static_cast<std::uint64_t>(j));
    const ContrastiveTuple t = sample_tuple(model, k, rng);
    std::vector<Vec> slots;
    slots.reserve(static_cast<size_t>(k + 2));
    slots.push_back(t.anchor);
    slots.push_back(t.positive);
    for (const auto& n : t.negatives) slots.push_back(n);
    set.tuples.push_back(std::move(slots));
  }
  return set;
}

Mat rademacher_sup_matrix(const TupleDataset& dataset, int out_dim,
                          const std::vector<int>& signs) {
  if (dataset.tuples.empty()) throw std::invalid_argument("rademacher: empty dataset");
  const int in_dim = static_cast<int>(dataset.tuples.front().front().size());
  const size_t slots = dataset.tuples.front().size();
  if (signs.size() != dataset.tuples.size() * slots * static_cast<size_t>(out_dim))
    throw std::invalid_argument("rademacher: sign vector length mismatch");
  Mat m(out_dim, in_dim);
  size_t pos = 0;
  for (const auto& tuple : dataset.tuples) {
    if (tuple.size() != slots) throw std::invalid_argument("rademacher: ragged dataset");
    for (const auto& x : tuple) {
      if (static_cast<int>(x.size()) != in_dim)
        throw std::invalid_argument("rademacher: input dimension mismatch");
      for (int t = 0; t < out_dim; ++t) {
        const double s = static_cast<double>(signs[pos++]);
        for (int j = 0; j < in_dim; ++j) m(t, j) += s * x[static_cast<size_t>(j)];
      }
    }
  }
  return m;
}

RademacherEstimate rademacher_linear(const TupleDataset& dataset, double frob_bound,
                                     int out_dim, long long draws, std::uint64_t seed) {
  if (!(frob_bound > 0.0)) throw std::invalid_argument("rademacher: frob_bound must be positive");
  if (draws < 1) throw std::invalid_argument("rademacher: draws must be positive");
  if (dataset.tuples.empty()) throw std::invalid_argument("rademacher: empty dataset");
  const size_t slots = dataset.tuples.front().size();
  const size_t sign_count = dataset.tuples.size() * slots * static_cast<size_t>(out_dim);
  RunningStat stat;
  std::vector<int> signs(sign_count);
  for (long long d = 0; d < draws; ++d) {
    CounterRng rng = CounterRng::derive(seed, static_cast<std::uint64_t>(d));
    for (auto& s : signs) s = (rng.next_u64() & 1ULL) ? 1 : -1;
    stat.add(frob_bound * frobenius_norm(rademacher_sup_matrix(dataset, out_dim, signs)));
  }
  RademacherEstimate out;
  out.mean = stat.mean();
  out.std_error = stat.std_error();
  out.draws = stat.count();
  out.sample_size = static_cast<int>(dataset.tuples.size());
  out.k = dataset.k;
  return out;
}

GenBound gen_bound(const RademacherEstimate& rad, double r, double loss_bound,
                   double lipschitz_eta, double confidence_delta) {
  if (!(confidence_delta > 0.0 && confidence_delta < 1.0))
    throw std::invalid_argument("gen_bound: confidence_delta must lie in (0,1)");
  if (r < 0.0 || loss_bound < 0.0 || lipschitz_eta < 0.0 || rad.mean < 0.0)
    throw std::invalid_argument("gen_bound: inputs must be nonnegative");
  const double m = static_cast<double>(rad.sample_size);
  if (m < 1.0) throw std::invalid_argument("gen_bound: empty sample");
  const double contraction = 4.0 * std::sqrt(3.0);
  const double rad_term =
      contraction * lipschitz_eta * r * std::sqrt(static_cast<double>(rad.k)) * rad.mean / m;
  const double conc_term = 3.0 * loss_bound * std::sqrt(std::log(4.0 / confidence_delta) / (2.0 * m));
  const double hoeffding = 3.0 * loss_bound * std::sqrt(std::log(2.0 / confidence_delta) / (2.0 * m));
  GenBound out;
  out.value = rad_term + conc_term + hoeffding;
  out.confidence_delta = confidence_delta;
  out.constants = {
      {"contraction", contraction},
      {"rad_term", rad_term},
      {"concentration_term", conc_term},
      {"hoeffding_term", hoeffding},
      {"loss_bound", loss_bound},
      {"lipschitz_eta", lipschitz_eta},
      {"r", r},
      {"k", static_cast<double>(rad.k)},
      {"sample_size", m},
  };
  return out;
}

}  // namespace shiftbounds
