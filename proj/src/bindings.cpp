#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "shiftbounds/auditor.hpp"
#include "shiftbounds/cli.hpp"
#include "shiftbounds/io.hpp"
#include "shiftbounds/recovery.hpp"

namespace py = pybind11;
using namespace shiftbounds;

namespace {

Mat mat_from_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) return Mat();
  Mat m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size())
      throw std::invalid_argument("matrix rows must have equal length");
    for (size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  }
  return m;
}

MarginLossKind kind_from(const std::string& loss, int ways, const std::string& base) {
  MarginLossKind k;
  k.kind = loss == "logistic" ? MarginLoss::logistic : MarginLoss::hinge;
  k.ways = ways;
  k.base = base == "natural" ? LogBase::natural : LogBase::two;
  return k;
}

AuditOptions options_from(const py::dict& kw) {
  AuditOptions o;
  if (kw.contains("loss"))
    o.loss = kw["loss"].cast<std::string>() == "logistic" ? MarginLoss::logistic
                                                          : MarginLoss::hinge;
  if (kw.contains("k")) o.k = kw["k"].cast<int>();
  if (kw.contains("draws")) o.draws = kw["draws"].cast<long long>();
  if (kw.contains("samples")) o.sample_size = kw["samples"].cast<int>();
  if (kw.contains("fit_steps")) o.fit_steps = kw["fit_steps"].cast<int>();
  if (kw.contains("confidence_delta")) o.confidence_delta = kw["confidence_delta"].cast<double>();
  if (kw.contains("seed")) o.seed = kw["seed"].cast<std::uint64_t>();
  return o;
}

py::dict estimate_dict(const Estimate& e) {
  py::dict d;
  d["estimate"] = e.value;
  d["std_error"] = e.std_error;
  d["draws"] = e.draws;
  return d;
}

py::dict report_dict(const BoundReport& r) {
  py::dict d;
  d["theorem"] = r.theorem;
  d["lhs"] = estimate_dict(r.lhs);
  py::dict terms;
  for (const auto& [name, est] : r.rhs_terms) terms[py::str(name)] = estimate_dict(est);
  d["rhs_terms"] = terms;
  d["rhs_total"] = estimate_dict(r.rhs_total);
  d["slack"] = r.slack;
  d["verdict"] = verdict_name(r.verdict);
  py::dict consts;
  for (const auto& [name, v] : r.constants) consts[py::str(name)] = v;
  d["constants"] = consts;
  return d;
}

ShiftProfile profile_from(const std::vector<Vec>& deltas, double epsilon) {
  ShiftProfile p;
  p.deltas = deltas;
  p.epsilon = epsilon;
  for (const auto& d : p.deltas) p.epsilon = std::max(p.epsilon, norm(d));
  return p;
}

}  // namespace

PYBIND11_MODULE(_shiftbounds, m) {
  m.doc() = "latent-class contrastive model simulation and bound auditing";

  py::class_<ClassPrior>(m, "ClassPrior")
      .def(py::init<Vec>())
      .def_property_readonly("probs", &ClassPrior::probs)
      .def("num_classes", &ClassPrior::num_classes);

  py::class_<LatentModel>(m, "LatentModel")
      .def(py::init([](const Vec& prior, const std::vector<Vec>& means,
                       const std::vector<std::vector<Vec>>& covs, double norm_bound) {
             std::vector<ClassDistribution> classes;
             for (size_t c = 0; c < means.size(); ++c)
               classes.push_back(ClassDistribution{means[c], mat_from_rows(covs[c])});
             return LatentModel(ClassPrior(prior), std::move(classes), norm_bound);
           }),
           py::arg("prior"), py::arg("means"), py::arg("covs"), py::arg("norm_bound"))
      .def("num_classes", &LatentModel::num_classes)
      .def("dimension", &LatentModel::dimension)
      .def("norm_bound", &LatentModel::norm_bound);

  m.def("read_model", &read_model, py::arg("path"));
  m.def("collision_prob", [](const Vec& p) { return collision_prob(ClassPrior(p)); });
  m.def("collision_prob_k",
        [](const Vec& p, int k) { return collision_prob_k(ClassPrior(p), k); });
  m.def("all_collide_prob",
        [](const Vec& p, int k) { return all_collide_prob(ClassPrior(p), k); });
  m.def("nu_distribution", [](const Vec& p) { return nu_distribution(ClassPrior(p)).probs(); });
  m.def("u_distribution",
        [](const Vec& p, int k) { return u_distribution(ClassPrior(p), k).probs(); });

  m.def(
      "sample_tuple",
      [](const LatentModel& model, int k, std::uint64_t seed) {
        const ContrastiveTuple t = sample_tuple(model, k, seed);
        py::dict d;
        d["anchor"] = t.anchor;
        d["positive"] = t.positive;
        d["negatives"] = t.negatives;
        d["anchor_class"] = t.anchor_class;
        d["negative_classes"] = t.negative_classes;
        d["collision_indices"] = t.collision_indices;
        d["distinct_classes"] = t.distinct_classes;
        return d;
      },
      py::arg("model"), py::arg("k"), py::arg("seed"));

  m.def(
      "margin_loss",
      [](const std::string& loss, const Vec& v, const std::string& base) {
        return margin_loss(kind_from(loss, static_cast<int>(v.size()), base), v);
      },
      py::arg("loss"), py::arg("margins"), py::arg("base") = "two");
  m.def(
      "margin_loss_grad",
      [](const std::string& loss, const Vec& v, const std::string& base) {
        return margin_loss_grad(kind_from(loss, static_cast<int>(v.size()), base), v);
      },
      py::arg("loss"), py::arg("margins"), py::arg("base") = "two");
  m.def(
      "ntxent_batch",
      [](const std::vector<Vec>& embeddings, double temperature, bool exclude_self) {
        return ntxent_batch(embeddings, InfoNCEConfig{temperature, exclude_self});
      },
      py::arg("embeddings"), py::arg("temperature") = 1.0, py::arg("exclude_self") = true);

  m.def(
      "unsup_loss",
      [](const LatentModel& model, const std::string& loss, int k, long long draws,
         std::uint64_t seed) {
        return estimate_dict(
            unsup_loss(model, LinearEncoder::identity(), kind_from(loss, k, "two"), k, draws, seed));
      },
      py::arg("model"), py::arg("loss"), py::arg("k"), py::arg("draws"), py::arg("seed"));

  m.def(
      "enumerate_tuples",
      [](const Vec& prior, int k) {
        py::list out;
        for (const auto& t : enumerate_tuples(ClassPrior(prior), k)) {
          py::dict d;
          d["classes"] = t.classes;
          d["probability"] = t.probability;
          d["collision_indices"] = t.collision_indices;
          d["distinct_classes"] = t.distinct_classes;
          out.append(d);
        }
        return out;
      },
      py::arg("prior"), py::arg("k"));

  m.def(
      "unsup_loss_split",
      [](const LatentModel& model, const std::string& loss, int k, long long draws,
         std::uint64_t seed) {
        const SplitLoss s = unsup_loss_split(model, LinearEncoder::identity(),
                                             kind_from(loss, k, "two"), k, draws, seed);
        py::dict d;
        d["l_eq"] = estimate_dict(s.l_eq);
        d["l_neq"] = estimate_dict(s.l_neq);
        d["combined_check"] = s.combined_check;
        return d;
      },
      py::arg("model"), py::arg("loss"), py::arg("k"), py::arg("draws"), py::arg("seed"));

  m.def(
      "mean_shift_stat",
      [](const std::vector<Vec>& pre, const std::vector<Vec>& down) {
        return mean_shift_stat(pre, down);
      },
      py::arg("pre_means"), py::arg("down_means"));

  m.def(
      "bias_actual",
      [](const LatentModel& model, const std::string& loss, const std::vector<Vec>& deltas,
         double epsilon, long long draws, std::uint64_t seed, const std::string& base) {
        return estimate_dict(bias_actual(model, LinearEncoder::identity(),
                                         kind_from(loss, 1, base), profile_from(deltas, epsilon),
                                         draws, seed));
      },
      py::arg("model"), py::arg("loss"), py::arg("deltas"), py::arg("epsilon"),
      py::arg("draws"), py::arg("seed"), py::arg("base") = "two");

  m.def(
      "bias_sup",
      [](const LatentModel& model, const std::string& loss, double epsilon, long long draws,
         std::uint64_t seed, const std::string& base) {
        return bias_sup(model, LinearEncoder::identity(), kind_from(loss, 1, base), epsilon,
                        draws, seed);
      },
      py::arg("model"), py::arg("loss"), py::arg("epsilon"), py::arg("draws"), py::arg("seed"),
      py::arg("base") = "natural");

  m.def(
      "intra_class_deviation",
      [](const LatentModel& model, long long draws, std::uint64_t seed) {
        const IntraClassStats s =
            intra_class_deviation(model, LinearEncoder::identity(), draws, seed);
        py::dict d;
        d["s_value"] = s.s_value;
        d["s_std_error"] = s.s_std_error;
        py::list per_class;
        for (const auto& pc : s.per_class) {
          py::dict c;
          c["cov_spectral_norm"] = pc.cov_spectral_norm;
          c["mean_norm"] = estimate_dict(pc.mean_norm);
          per_class.append(c);
        }
        d["per_class"] = per_class;
        return d;
      },
      py::arg("model"), py::arg("draws"), py::arg("seed"));

  m.def(
      "estimate_sigma_f",
      [](const std::vector<Vec>& samples, int directions, std::uint64_t seed) {
        return estimate_sigma_f(samples, directions, seed);
      },
      py::arg("samples"), py::arg("directions") = 64, py::arg("seed") = 0);

  m.def(
      "gen_bound",
      [](double rad_mean, int sample_size, int k, double r, double loss_bound, double eta,
         double confidence_delta) {
        RademacherEstimate rad;
        rad.mean = rad_mean;
        rad.sample_size = sample_size;
        rad.k = k;
        rad.draws = 1;
        const GenBound g = gen_bound(rad, r, loss_bound, eta, confidence_delta);
        py::dict d;
        d["value"] = g.value;
        d["confidence_delta"] = g.confidence_delta;
        py::dict consts;
        for (const auto& [name, v] : g.constants) consts[py::str(name)] = v;
        d["constants"] = consts;
        return d;
      },
      py::arg("rad_mean"), py::arg("sample_size"), py::arg("k"), py::arg("r"),
      py::arg("loss_bound"), py::arg("eta"), py::arg("confidence_delta") = 0.05);

  m.def(
      "recover_pseudo_means",
      [](const std::vector<std::string>& labels, const std::vector<Vec>& vectors, int k,
         const std::map<std::string, Vec>& downstream_means, std::uint64_t seed,
         const std::string& cost) {
        EmbeddingSet set;
        set.dimension = vectors.empty() ? 0 : static_cast<int>(vectors.front().size());
        for (size_t i = 0; i < vectors.size(); ++i)
          set.rows.push_back(EmbeddingRow{i < labels.size() ? labels[i] : "", vectors[i]});
        const RecoveredMeans rec = recover_pseudo_means(
            set, k, downstream_means, seed,
            cost == "overlap" ? AlignCost::label_overlap : AlignCost::mean_distance);
        py::dict d;
        py::dict means;
        for (const auto& [label, mu] : rec.means) means[py::str(label)] = mu;
        d["means"] = means;
        d["permutation"] = rec.alignment.permutation;
        d["alignment_cost"] = rec.alignment.cost;
        d["inertia"] = rec.clustering.inertia;
        return d;
      },
      py::arg("labels"), py::arg("vectors"), py::arg("k"), py::arg("downstream_means"),
      py::arg("seed") = 0, py::arg("cost") = "mean");

  m.def(
      "bias_ceilings",
      [](double r, double eps, double l, double sigma_f) {
        return bias_ceilings(r, eps, l, sigma_f);
      },
      py::arg("r"), py::arg("epsilon"), py::arg("lipschitz"), py::arg("sigma_f"));

  m.def("novel_class_bias_bound", &novel_class_bias_bound, py::arg("in_dist_bias"),
        py::arg("residual_norm"), py::arg("lipschitz"), py::arg("r"));

  m.def(
      "hull_project",
      [](const std::vector<Vec>& means, const Vec& target, double tol, int max_iters) {
        const HullProjection h = hull_project(means, target, tol, max_iters);
        py::dict d;
        d["weights"] = h.weights;
        d["projected"] = h.projected;
        d["residual_norm"] = h.residual_norm;
        d["gap"] = h.gap;
        d["iterations"] = h.iterations;
        return d;
      },
      py::arg("pre_means"), py::arg("target"), py::arg("tolerance") = 1e-8,
      py::arg("max_iters") = 10000);

  m.def(
      "spectral_norm",
      [](const std::vector<Vec>& rows, double tol, int iters) {
        return spectral_norm(mat_from_rows(rows), tol, iters);
      },
      py::arg("matrix"), py::arg("tolerance") = 1e-12, py::arg("max_iters") = 10000);

  m.def(
      "kmeans",
      [](const std::vector<Vec>& points, int k, int max_iters, double tol, std::uint64_t seed) {
        const KMeansResult r = kmeans(points, k, max_iters, tol, seed);
        py::dict d;
        d["centroids"] = r.centroids;
        d["assignments"] = r.assignments;
        d["inertia"] = r.inertia;
        d["iterations"] = r.iterations;
        return d;
      },
      py::arg("points"), py::arg("k"), py::arg("max_iters") = 200, py::arg("tolerance") = 1e-9,
      py::arg("seed") = 0);

  m.def(
      "hungarian",
      [](const std::vector<Vec>& cost) {
        const Alignment a = hungarian(mat_from_rows(cost));
        py::dict d;
        d["permutation"] = a.permutation;
        d["cost"] = a.cost;
        return d;
      },
      py::arg("cost"));

  m.def("spearman", &spearman, py::arg("x"), py::arg("y"));

  m.def(
      "shift_accuracy_table",
      [](const std::vector<std::tuple<std::string, double, double>>& entries) {
        std::vector<SweepEntry> rows;
        for (const auto& [tag, d, a] : entries) rows.push_back(SweepEntry{tag, d, a});
        const CorrelationReport rep = shift_accuracy_table(std::move(rows));
        py::list table;
        for (const auto& e : rep.table)
          table.append(py::make_tuple(e.severity, e.delta_hat, e.accuracy));
        py::dict out;
        out["spearman"] = rep.spearman;
        out["table"] = table;
        return out;
      },
      py::arg("entries"));

  m.def(
      "rademacher_linear",
      [](const LatentModel& model, int k, int samples, double frob_bound, long long draws,
         std::uint64_t seed) {
        const TupleDataset set = draw_tuple_dataset(model, k, samples, seed);
        const RademacherEstimate r =
            rademacher_linear(set, frob_bound, model.dimension(), draws, seed + 1);
        py::dict d;
        d["mean"] = r.mean;
        d["std_error"] = r.std_error;
        d["draws"] = r.draws;
        d["sample_size"] = r.sample_size;
        d["k"] = r.k;
        return d;
      },
      py::arg("model"), py::arg("k"), py::arg("samples"), py::arg("frob_bound"),
      py::arg("draws"), py::arg("seed"));

  m.def(
      "audit",
      [](const std::string& theorem, const LatentModel& model, const std::vector<Vec>& deltas,
         double epsilon, const py::kwargs& kw) {
        py::dict kwd;
        for (const auto& item : kw) kwd[item.first] = item.second;
        const AuditOptions o = options_from(kwd);
        const ShiftProfile shift =
            deltas.empty() ? ShiftProfile::zero(model.num_classes(), model.dimension())
                           : profile_from(deltas, epsilon);
        BoundReport rep;
        if (theorem == "4.1") {
          rep = audit_theorem_4_1(model, shift, o);
        } else if (theorem == "4.5") {
          rep = audit_theorem_4_5(model, shift, o);
        } else if (theorem == "B.1") {
          rep = audit_theorem_B_1(model, shift, o);
        } else {
          throw std::invalid_argument("audit: theorem must be 4.1, 4.5 or B.1");
        }
        return report_dict(rep);
      },
      py::arg("theorem"), py::arg("model"), py::arg("deltas") = std::vector<Vec>{},
      py::arg("epsilon") = 0.0);

  m.def(
      "read_embeddings",
      [](const std::string& path) {
        const EmbeddingSet set = read_embeddings(path);
        py::list labels;
        py::list vectors;
        for (const auto& row : set.rows) {
          labels.append(row.label);
          vectors.append(row.vector);
        }
        py::dict d;
        d["dimension"] = set.dimension;
        d["labels"] = labels;
        d["vectors"] = vectors;
        return d;
      },
      py::arg("path"));

  m.def(
      "write_embeddings",
      [](const std::string& path, const std::vector<std::string>& labels,
         const std::vector<Vec>& vectors, const std::string& split) {
        if (labels.size() != vectors.size())
          throw std::invalid_argument("write_embeddings: labels/vectors length mismatch");
        EmbeddingSet set;
        set.dimension = vectors.empty() ? 0 : static_cast<int>(vectors.front().size());
        set.split = split == "downstream" ? Split::downstream : Split::pretrain;
        for (size_t i = 0; i < labels.size(); ++i)
          set.rows.push_back(EmbeddingRow{labels[i], vectors[i]});
        write_embeddings(set, path);
      },
      py::arg("path"), py::arg("labels"), py::arg("vectors"), py::arg("split") = "pretrain");

  m.def(
      "run_cli", [](const std::vector<std::string>& args) { return run_cli(args); },
      py::arg("args"));
}
