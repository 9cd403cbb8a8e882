#include "shiftbounds/latent_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "shiftbounds/encoder.hpp"

namespace shiftbounds {

namespace {
constexpr double kCovJitter = 1e-10;
constexpr int kRejectionBatch = 4096;
}  // namespace

ClassPrior::ClassPrior(Vec probabilities) : p_(std::move(probabilities)) {
  if (p_.size() < 2) throw std::invalid_argument("prior: need at least 2 classes");
  double sum = 0.0;
  for (double v : p_) {
    if (v < 0.0) throw std::invalid_argument("prior: negative entry");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("prior: entries sum to " + std::to_string(sum));
  cdf_.resize(p_.size());
  double acc = 0.0;
  for (size_t i = 0; i < p_.size(); ++i) {
    acc += p_[i];
    cdf_[i] = acc;
  }
  cdf_.back() = 1.0;
}

int ClassPrior::sample(CounterRng& rng) const {
  const double u = rng.next_uniform();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  return static_cast<int>(it - cdf_.begin());
}

LatentModel::LatentModel(ClassPrior prior, std::vector<ClassDistribution> classes,
                         double norm_bound)
    : prior_(std::move(prior)), classes_(std::move(classes)), norm_bound_(norm_bound) {
  if (static_cast<int>(classes_.size()) != prior_.num_classes())
    throw std::invalid_argument("model: class count does not match prior");
  if (!(norm_bound_ > 0.0)) throw std::invalid_argument("model: norm_bound must be positive");
  dim_ = static_cast<int>(classes_.front().mean.size());
  chol_.reserve(classes_.size());
  for (const auto& c : classes_) {
    if (static_cast<int>(c.mean.size()) != dim_)
      throw std::invalid_argument("model: inconsistent class dimensions");
    if (c.covariance.rows != dim_ || c.covariance.cols != dim_)
      throw std::invalid_argument("model: covariance shape mismatch");
    if (!is_symmetric(c.covariance, 1e-10))
      throw std::invalid_argument("model: covariance not symmetric");
    if (norm(c.mean) > norm_bound_ + 1e-12)
      throw std::invalid_argument("model: class mean outside the norm ball");
    chol_.push_back(cholesky_psd(c.covariance, kCovJitter));
  }
}

Vec LatentModel::sample_point(int c, CounterRng& rng) const {
  const Mat& l = chol_[static_cast<size_t>(c)];
  const Vec& mu = classes_[static_cast<size_t>(c)].mean;
  long long rejected = 0;
  for (;;) {
    Vec z(dim_);
    for (int i = 0; i < dim_; ++i) z[i] = rng.next_gaussian();
    Vec x = mu;
    for (int i = 0; i < dim_; ++i) {
      double s = 0.0;
      for (int j = 0; j <= i; ++j) s += l(i, j) * z[j];
      x[static_cast<size_t>(i)] += s;
    }
    if (norm(x) <= norm_bound_) return x;
    if (++rejected >= kRejectionBatch)
      throw std::runtime_error(
          "sample_point: rejection acceptance below 1% for class " + std::to_string(c));
  }
}

ContrastiveTuple sample_tuple(const LatentModel& model, int k, CounterRng& rng) {
  if (k < 1) throw std::invalid_argument("sample_tuple: k must be >= 1");
  ContrastiveTuple t;
  t.anchor_class = model.prior().sample(rng);
  t.anchor = model.sample_point(t.anchor_class, rng);
  t.positive = model.sample_point(t.anchor_class, rng);
  t.negative_classes.resize(static_cast<size_t>(k));
  t.negatives.resize(static_cast<size_t>(k));
  std::set<int> distinct{t.anchor_class};
  for (int i = 0; i < k; ++i) {
    const int c = model.prior().sample(rng);
    t.negative_classes[static_cast<size_t>(i)] = c;
    t.negatives[static_cast<size_t>(i)] = model.sample_point(c, rng);
    if (c == t.anchor_class) t.collision_indices.push_back(i);
    distinct.insert(c);
  }
  t.distinct_classes.assign(distinct.begin(), distinct.end());
  return t;
}

ContrastiveTuple sample_tuple(const LatentModel& model, int k, std::uint64_t seed) {
  CounterRng rng(seed);
  return sample_tuple(model, k, rng);
}

double collision_prob(const ClassPrior& prior) {
  double s = 0.0;
  for (double p : prior.probs()) s += p * p;
  return s;
}

double collision_prob_k(const ClassPrior& prior, int k) {
  if (k < 1) throw std::invalid_argument("collision_prob_k: k must be >= 1");
  double miss = 0.0;
  for (double p : prior.probs()) miss += p * std::pow(1.0 - p, k);
  return 1.0 - miss;
}

double all_collide_prob(const ClassPrior& prior, int k) {
  if (k < 1) throw std::invalid_argument("all_collide_prob: k must be >= 1");
  double s = 0.0;
  for (double p : prior.probs()) s += std::pow(p, k + 1);
  return s;
}

namespace {
ClassPrior normalized(Vec w) {
  double sum = 0.0;
  for (double v : w) sum += v;
  if (!(sum > 0.0)) throw std::invalid_argument("distribution: zero total weight");
  for (double& v : w) v /= sum;
  // renormalize exactly against accumulated roundoff
  double check = 0.0;
  for (double v : w) check += v;
  w.back() += 1.0 - check;
  return ClassPrior(std::move(w));
}
}  // namespace

ClassPrior nu_distribution(const ClassPrior& prior) {
  Vec w(prior.probs());
  for (double& v : w) v *= v;
  return normalized(std::move(w));
}

ClassPrior u_distribution(const ClassPrior& prior, int k) {
  if (k < 1) throw std::invalid_argument("u_distribution: k must be >= 1");
  Vec w(prior.probs());
  for (double& v : w) v *= 1.0 - std::pow(1.0 - v, k);
  return normalized(std::move(w));
}

std::vector<ClassTupleInfo> enumerate_tuples(const ClassPrior& prior, int k) {
  if (k < 1) throw std::invalid_argument("enumerate_tuples: k must be >= 1");
  const int c = prior.num_classes();
  double total = 1.0;
  for (int i = 0; i <= k; ++i) {
    total *= c;
    if (total > 1e6) throw std::invalid_argument("enumerate_tuples: C^(k+1) exceeds 1e6");
  }
  const long long n = static_cast<long long>(total);
  std::vector<ClassTupleInfo> out;
  out.reserve(static_cast<size_t>(n));
  std::vector<int> tuple(static_cast<size_t>(k + 1), 0);
  for (long long idx = 0; idx < n; ++idx) {
    long long rem = idx;
    for (int pos = k; pos >= 0; --pos) {
      tuple[static_cast<size_t>(pos)] = static_cast<int>(rem % c);
      rem /= c;
    }
    ClassTupleInfo info;
    info.classes = tuple;
    info.probability = 1.0;
    std::set<int> distinct;
    for (int pos = 0; pos <= k; ++pos) {
      info.probability *= prior.prob(tuple[static_cast<size_t>(pos)]);
      distinct.insert(tuple[static_cast<size_t>(pos)]);
      if (pos >= 1 && tuple[static_cast<size_t>(pos)] == tuple[0])
        info.collision_indices.push_back(pos - 1);
    }
    info.distinct_classes.assign(distinct.begin(), distinct.end());
    out.push_back(std::move(info));
  }
  return out;
}

LinearEncoder LinearEncoder::linear(Mat w, double bound) {
  if (!(bound > 0.0)) throw std::invalid_argument("encoder: frob_bound must be positive");
  LinearEncoder e{std::move(w), bound};
  e.project_frobenius();
  return e;
}

void LinearEncoder::project_frobenius() {
  if (is_identity() || frob_bound <= 0.0) return;
  const double f = frobenius_norm(matrix);
  if (f > frob_bound) {
    const double s = frob_bound / f;
    for (double& v : matrix.data) v *= s;
  }
}

double LinearEncoder::operator_norm() const {
  if (is_identity()) return 1.0;
  // power iteration on W^T W
  const Mat g = matmul(transpose(matrix), matrix);
  Vec v(static_cast<size_t>(g.rows), 1.0);
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vec w = matvec(g, v);
    const double n = norm(w);
    if (n == 0.0) return 0.0;
    for (double& x : w) x /= n;
    const double next = dot(w, matvec(g, w));
    v = std::move(w);
    if (std::fabs(next - lambda) <= 1e-14 * std::max(1.0, std::fabs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(0.0, lambda));
}

}  // namespace shiftbounds
