#include "shiftbounds/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "shiftbounds/rng.hpp"

namespace shiftbounds {

namespace {

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

int nearest_centroid(const Vec& p, const std::vector<Vec>& centroids) {
  int best = 0;
  double best_d = sq_dist(p, centroids[0]);
  for (size_t c = 1; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<Vec> kmeanspp_init(const std::vector<Vec>& points, int k, CounterRng& rng) {
  std::vector<Vec> centroids;
  centroids.reserve(static_cast<size_t>(k));
  centroids.push_back(points[static_cast<size_t>(rng.next_uniform() *
                                                 static_cast<double>(points.size()))]);
  Vec d2(points.size());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
      double best = sq_dist(points[i], centroids[0]);
      for (size_t j = 1; j < centroids.size(); ++j)
        best = std::min(best, sq_dist(points[i], centroids[j]));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // all remaining points coincide with a centroid; reuse the first point
      centroids.push_back(points[0]);
      continue;
    }
    double u = rng.next_uniform() * total;
    size_t pick = points.size() - 1;
    for (size_t i = 0; i < points.size(); ++i) {
      u -= d2[i];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const std::vector<Vec>& points, int k, int max_iters, double tolerance,
                    std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (static_cast<int>(points.size()) < k)
    throw std::invalid_argument("kmeans: fewer points than clusters");
  CounterRng rng = CounterRng::derive(seed, 0x6b6dULL);

  KMeansResult res;
  res.centroids = kmeanspp_init(points, k, rng);
  res.assignments.assign(points.size(), 0);
  int rescues = 0;

  for (int it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    for (size_t i = 0; i < points.size(); ++i)
      res.assignments[i] = nearest_centroid(points[i], res.centroids);

    std::vector<Vec> sums(static_cast<size_t>(k), Vec(points[0].size(), 0.0));
    std::vector<long long> counts(static_cast<size_t>(k), 0);
    for (size_t i = 0; i < points.size(); ++i) {
      axpy(1.0, points[i], sums[static_cast<size_t>(res.assignments[i])]);
      ++counts[static_cast<size_t>(res.assignments[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) continue;
      // reseed the empty cluster at the point farthest from its centroid
      if (++rescues > 5) throw std::runtime_error("kmeans: persistent empty cluster");
      size_t far = 0;
      double far_d = -1.0;
      for (size_t i = 0; i < points.size(); ++i) {
        const double d = sq_dist(points[i], res.centroids[static_cast<size_t>(res.assignments[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      sums[static_cast<size_t>(c)] = points[far];
      counts[static_cast<size_t>(c)] = 1;
      const int old = res.assignments[far];
      axpy(-1.0, points[far], sums[static_cast<size_t>(old)]);
      --counts[static_cast<size_t>(old)];
      res.assignments[far] = c;
    }

    double movement = 0.0;
    for (int c = 0; c < k; ++c) {
      Vec next = sums[static_cast<size_t>(c)];
      for (double& v : next) v /= static_cast<double>(counts[static_cast<size_t>(c)]);
      movement = std::max(movement, std::sqrt(sq_dist(next, res.centroids[static_cast<size_t>(c)])));
      res.centroids[static_cast<size_t>(c)] = std::move(next);
    }
    if (movement < tolerance) break;
  }

  // final assignment against the final centroids keeps the invariant
  res.inertia = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    res.assignments[i] = nearest_centroid(points[i], res.centroids);
    res.inertia += sq_dist(points[i], res.centroids[static_cast<size_t>(res.assignments[i])]);
  }
  return res;
}

Alignment hungarian(const Mat& cost) {
  if (cost.rows == 0 || cost.cols == 0) throw std::invalid_argument("hungarian: empty matrix");
  for (double v : cost.data)
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian: non-finite cost");

  const bool transposed = cost.rows > cost.cols;
  const Mat a = transposed ? transpose(cost) : cost;
  const int n = a.rows, m = a.cols;

  // shortest-augmenting-path assignment, 1-indexed potentials
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(m) + 1, 0), way(static_cast<size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m) + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(static_cast<size_t>(m) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;

  Alignment out;
  if (!transposed) {
    out.permutation = row_to_col;
  } else {
    out.permutation.assign(static_cast<size_t>(cost.rows), -1);
    for (int i = 0; i < n; ++i)
      if (row_to_col[static_cast<size_t>(i)] >= 0)
        out.permutation[static_cast<size_t>(row_to_col[static_cast<size_t>(i)])] = i;
  }
  out.cost = 0.0;
  for (int r = 0; r < cost.rows; ++r)
    if (out.permutation[static_cast<size_t>(r)] >= 0)
      out.cost += cost(r, out.permutation[static_cast<size_t>(r)]);
  return out;
}

RecoveredMeans recover_pseudo_means(const EmbeddingSet& embeddings, int k,
                                    const std::map<std::string, Vec>& downstream_means,
                                    std::uint64_t seed, AlignCost cost_kind) {
  if (static_cast<int>(downstream_means.size()) != k)
    throw std::invalid_argument("recover_pseudo_means: K must match the downstream class count");
  std::vector<Vec> points;
  points.reserve(embeddings.rows.size());
  for (const auto& row : embeddings.rows) points.push_back(row.vector);

  RecoveredMeans out;
  out.clustering = kmeans(points, k, 200, 1e-9, seed);

  // pseudo-mean of each final cluster
  std::vector<Vec> pseudo(static_cast<size_t>(k), Vec(points[0].size(), 0.0));
  std::vector<long long> counts(static_cast<size_t>(k), 0);
  for (size_t i = 0; i < points.size(); ++i) {
    axpy(1.0, points[i], pseudo[static_cast<size_t>(out.clustering.assignments[i])]);
    ++counts[static_cast<size_t>(out.clustering.assignments[i])];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<size_t>(c)] == 0)
      throw std::runtime_error("recover_pseudo_means: empty cluster after k-means");
    for (double& v : pseudo[static_cast<size_t>(c)])
      v /= static_cast<double>(counts[static_cast<size_t>(c)]);
  }

  std::vector<std::string> labels;
  labels.reserve(downstream_means.size());
  for (const auto& [label, mu] : downstream_means) labels.push_back(label);

  Mat cost(k, k);
  if (cost_kind == AlignCost::mean_distance) {
    for (int c = 0; c < k; ++c)
      for (int j = 0; j < k; ++j)
        cost(c, j) = std::sqrt(sq_dist(pseudo[static_cast<size_t>(c)],
                                       downstream_means.at(labels[static_cast<size_t>(j)])));
  } else {
    // negated label counts per cluster: needs the labeled rows
    for (size_t i = 0; i < embeddings.rows.size(); ++i) {
      const auto it = std::find(labels.begin(), labels.end(), embeddings.rows[i].label);
      if (it == labels.end())
        throw std::invalid_argument("recover_pseudo_means: row label '" +
                                    embeddings.rows[i].label + "' not a downstream class");
      cost(out.clustering.assignments[i], static_cast<int>(it - labels.begin())) -= 1.0;
    }
  }
  out.alignment = hungarian(cost);
  for (int c = 0; c < k; ++c) {
    const int j = out.alignment.permutation[static_cast<size_t>(c)];
    if (j >= 0) out.means[labels[static_cast<size_t>(j)]] = pseudo[static_cast<size_t>(c)];
  }
  return out;
}

namespace {

Vec midranks(const Vec& x) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  Vec ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;  // average 1-based rank
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const Vec& x, const Vec& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two sequences of equal length >= 2");
  const Vec rx = midranks(x), ry = midranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;  // constant sequence, midrank convention
  return sxy / std::sqrt(sxx * syy);
}

CorrelationReport shift_accuracy_table(std::vector<SweepEntry> entries) {
  if (entries.size() < 3)
    throw std::invalid_argument("shift_accuracy_table: need at least 3 entries");
  Vec d, a;
  for (const auto& e : entries) {
    d.push_back(e.delta_hat);
    a.push_back(e.accuracy);
  }
  CorrelationReport rep;
  rep.spearman = spearman(d, a);
  std::sort(entries.begin(), entries.end(),
            [](const SweepEntry& l, const SweepEntry& r) { return l.delta_hat < r.delta_hat; });
  rep.table = std::move(entries);
  return rep;
}

}  // namespace shiftbounds
