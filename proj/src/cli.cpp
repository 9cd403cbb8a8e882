#include "shiftbounds/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "shiftbounds/io.hpp"
#include "shiftbounds/recovery.hpp"

namespace shiftbounds {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolated = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Model with every class mean translated by -t (a planted shift delta = t).
LatentModel shifted_model(const LatentModel& base, const Vec& t) {
  std::vector<ClassDistribution> classes;
  for (int c = 0; c < base.num_classes(); ++c) {
    ClassDistribution dist = base.class_dist(c);
    dist.mean = sub(dist.mean, t);
    classes.push_back(std::move(dist));
  }
  return LatentModel(ClassPrior(base.prior().probs()), std::move(classes),
                     base.norm_bound() + norm(t));
}

EmbeddingSet simulate_set(const LatentModel& model, long long n, std::uint64_t seed,
                          Split split, const std::string& severity) {
  EmbeddingSet set;
  set.dimension = model.dimension();
  set.split = split;
  set.severity = severity;
  set.rows.reserve(static_cast<size_t>(n));
  CounterRng rng = CounterRng::derive(seed, 0x51edULL);
  for (long long i = 0; i < n; ++i) {
    const int c = model.prior().sample(rng);
    set.rows.push_back(EmbeddingRow{std::to_string(c), model.sample_point(c, rng)});
  }
  return set;
}

struct AuditInputs {
  LatentModel model;
  ShiftProfile shift;
};

AuditInputs load_audit_inputs(const std::string& model_path, const std::string& pre_path,
                              const std::string& shift_path, const std::string& down_path,
                              std::optional<double> epsilon_override) {
  std::optional<LatentModel> model;
  std::vector<std::string> labels;
  if (!model_path.empty()) {
    model = read_model(model_path);
    for (int c = 0; c < model->num_classes(); ++c) labels.push_back(std::to_string(c));
  } else {
    FittedModel fitted = model_from_embeddings(read_embeddings(pre_path));
    labels = fitted.labels;
    model = std::move(fitted.model);
  }

  ShiftProfile shift = ShiftProfile::zero(model->num_classes(), model->dimension());
  if (!shift_path.empty()) {
    shift = read_shift_profile(shift_path, model->num_classes(), model->dimension());
  } else if (!down_path.empty()) {
    const auto down_means = empirical_class_means(read_embeddings(down_path));
    std::vector<Vec> pre, down;
    for (size_t c = 0; c < labels.size(); ++c) {
      const auto it = down_means.find(labels[c]);
      if (it == down_means.end())
        throw DataError("downstream embeddings miss class '" + labels[c] + "'");
      pre.push_back(model->class_dist(static_cast<int>(c)).mean);
      down.push_back(it->second);
    }
    shift = shift_from_means(pre, down);
  }
  if (epsilon_override) {
    double max_delta = 0.0;
    for (const auto& d : shift.deltas) max_delta = std::max(max_delta, norm(d));
    if (*epsilon_override + 1e-12 < max_delta)
      throw DataError("--epsilon " + fmt17(*epsilon_override) +
                      " is smaller than the largest delta norm " + fmt17(max_delta));
    shift.epsilon = *epsilon_override;
  }
  return AuditInputs{std::move(*model), std::move(shift)};
}

int cmd_audit(const std::string& theorem, const AuditInputs& in, const AuditOptions& opts,
              const std::string& out_path) {
  BoundReport report;
  if (theorem == "4.1") {
    report = audit_theorem_4_1(in.model, in.shift, opts);
  } else if (theorem == "4.5") {
    report = audit_theorem_4_5(in.model, in.shift, opts);
  } else {
    report = audit_theorem_B_1(in.model, in.shift, opts);
  }
  const std::string json = report_to_json(report, opts);
  if (out_path.empty()) {
    std::cout << json;
  } else {
    write_text_atomic(out_path, json);
  }
  std::cout << report.theorem << ": " << verdict_name(report.verdict)
            << " (slack " << fmt17(report.slack) << ")\n";
  return report.verdict == Verdict::violated ? kExitViolated : kExitOk;
}

int cmd_shift_sweep(const std::string& model_path, const std::string& sev_path, long long n,
                    std::uint64_t seed, const std::string& out_prefix) {
  const LatentModel model = read_model(model_path);
  const auto severities = read_severities(sev_path);
  const auto pre_means = model_class_means(model, LinearEncoder::identity());

  MeanClassifier clf;
  for (int c = 0; c < model.num_classes(); ++c) {
    clf.classes.push_back(std::to_string(c));
    clf.rows.push_back(pre_means[static_cast<size_t>(c)]);
  }

  std::vector<SweepEntry> entries;
  std::uint64_t stream = 0;
  for (const auto& step : severities) {
    const Vec t = severity_translation(step, model.dimension());
    const LatentModel down_model = shifted_model(model, t);
    const EmbeddingSet down =
        simulate_set(down_model, n, seed + (stream++), Split::downstream, step.tag);
    const auto down_means_map = empirical_class_means(down);
    std::vector<Vec> down_means;
    for (int c = 0; c < model.num_classes(); ++c) {
      const auto it = down_means_map.find(std::to_string(c));
      if (it == down_means_map.end())
        throw DataError("severity '" + step.tag + "': no samples for class " + std::to_string(c));
      down_means.push_back(it->second);
    }
    SweepEntry e;
    e.severity = step.tag;
    e.delta_hat = mean_shift_stat(pre_means, down_means);
    e.accuracy = accuracy_mean(down, clf);
    entries.push_back(std::move(e));
  }

  const CorrelationReport rep = shift_accuracy_table(std::move(entries));
  std::string csv = "severity,delta_hat,accuracy\n";
  for (const auto& e : rep.table)
    csv += e.severity + "," + fmt17(e.delta_hat) + "," + fmt17(e.accuracy) + "\n";
  write_text_atomic(out_prefix + ".csv", csv);
  nlohmann::ordered_json j;
  j["spearman"] = rep.spearman;
  write_text_atomic(out_prefix + ".json", j.dump(2) + "\n");
  std::cout << "spearman " << fmt17(rep.spearman) << "\n";
  return kExitOk;
}

int cmd_recover(const std::string& pre_path, const std::string& down_path, int k,
                const std::string& cost_name, std::uint64_t seed, const std::string& out_path) {
  const EmbeddingSet pre = read_embeddings(pre_path);
  const EmbeddingSet down = read_embeddings(down_path);
  const auto down_means = empirical_class_means(down);
  if (k == 0) k = static_cast<int>(down_means.size());
  const AlignCost cost =
      cost_name == "overlap" ? AlignCost::label_overlap : AlignCost::mean_distance;
  const RecoveredMeans rec = recover_pseudo_means(pre, k, down_means, seed, cost);

  MeanClassifier clf;
  for (const auto& [label, mu] : rec.means) {
    clf.classes.push_back(label);
    clf.rows.push_back(mu);
  }
  const double acc = accuracy_mean(down, clf);

  nlohmann::ordered_json j;
  j["k"] = k;
  j["cost"] = cost_name;
  nlohmann::ordered_json align;
  align["permutation"] = rec.alignment.permutation;
  align["cost"] = rec.alignment.cost;
  j["alignment"] = align;
  nlohmann::ordered_json means;
  for (const auto& [label, mu] : rec.means) means[label] = mu;
  j["pseudo_means"] = means;
  j["inertia"] = rec.clustering.inertia;
  j["delta_hat_recovered"] = mean_shift_stat(rec.means, down_means);
  j["accuracy_downstream"] = acc;
  write_text_atomic(out_path, j.dump(2) + "\n");
  std::cout << "recover: accuracy " << fmt17(acc) << "\n";
  return kExitOk;
}

int cmd_rademacher(const std::string& model_path, int k, int samples, double frob,
                   int out_dim, long long draws, std::uint64_t seed, double delta,
                   const std::string& loss_name, const std::string& out_path) {
  const LatentModel model = read_model(model_path);
  const double bound = frob > 0.0 ? frob : std::sqrt(static_cast<double>(model.dimension()));
  const int d_out = out_dim > 0 ? out_dim : model.dimension();
  const TupleDataset set = draw_tuple_dataset(model, k, samples, seed);
  const RademacherEstimate rad = rademacher_linear(set, bound, d_out, draws, seed + 1);
  const MarginLossKind kind{loss_name == "logistic" ? MarginLoss::logistic : MarginLoss::hinge,
                            k, LogBase::two};
  const double r = bound * model.norm_bound();
  const GenBound gen = gen_bound(rad, r, loss_upper_bound(kind, r), loss_lipschitz(kind), delta);

  nlohmann::ordered_json j;
  j["k"] = k;
  j["samples"] = samples;
  j["frob_bound"] = bound;
  j["out_dim"] = d_out;
  nlohmann::ordered_json rj;
  rj["mean"] = rad.mean;
  rj["std_error"] = rad.std_error;
  rj["draws"] = rad.draws;
  j["rademacher"] = rj;
  nlohmann::ordered_json gj;
  gj["value"] = gen.value;
  gj["confidence_delta"] = gen.confidence_delta;
  nlohmann::ordered_json cj;
  for (const auto& [name, v] : gen.constants) cj[name] = v;
  gj["constants"] = cj;
  j["gen_bound"] = gj;
  write_text_atomic(out_path, j.dump(2) + "\n");
  std::cout << "rademacher mean " << fmt17(rad.mean) << ", gen bound " << fmt17(gen.value)
            << "\n";
  return kExitOk;
}

int cmd_hull(const std::string& pre_path, const std::string& down_path,
             const std::string& target_label, double tolerance, int max_iters,
             double bias_in_dist, double lipschitz, double radius,
             const std::string& out_path) {
  const EmbeddingSet pre = read_embeddings(pre_path);
  const EmbeddingSet down = read_embeddings(down_path);
  const auto pre_means_map = empirical_class_means(pre);
  const auto down_means_map = empirical_class_means(down);
  const auto it = down_means_map.find(target_label);
  if (it == down_means_map.end())
    throw DataError("hull: downstream embeddings have no class '" + target_label + "'");

  std::vector<std::string> pre_labels;
  std::vector<Vec> pre_means;
  double max_norm = 0.0;
  for (const auto& [label, mu] : pre_means_map) {
    pre_labels.push_back(label);
    pre_means.push_back(mu);
  }
  for (const auto& row : pre.rows) max_norm = std::max(max_norm, norm(row.vector));
  const double r = radius > 0.0 ? radius : max_norm;

  const HullProjection proj = hull_project(pre_means, it->second, tolerance, max_iters);
  const double bound = novel_class_bias_bound(bias_in_dist, proj.residual_norm, lipschitz, r);

  nlohmann::ordered_json j;
  j["target_label"] = target_label;
  j["residual_norm"] = proj.residual_norm;
  nlohmann::ordered_json wj;
  for (size_t i = 0; i < pre_labels.size(); ++i) wj[pre_labels[i]] = proj.weights[i];
  j["weights"] = wj;
  j["projected"] = proj.projected;
  j["gap"] = proj.gap;
  j["iterations"] = proj.iterations;
  j["lipschitz"] = lipschitz;
  j["radius"] = r;
  j["bias_in_dist"] = bias_in_dist;
  j["novel_class_bias_bound"] = bound;
  write_text_atomic(out_path, j.dump(2) + "\n");
  std::cout << "hull residual " << fmt17(proj.residual_norm) << ", bias bound " << fmt17(bound)
            << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"latent-class contrastive model simulator and bound auditor"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "sample an embedding CSV from a model file");
  std::string sim_model, sim_out, sim_split = "pretrain", sim_sev_path, sim_sev_tag;
  long long sim_n = 1000;
  std::uint64_t sim_seed = 0;
  sim->add_option("--model", sim_model)->required();
  sim->add_option("--n", sim_n);
  sim->add_option("--seed", sim_seed);
  sim->add_option("--split", sim_split)->check(CLI::IsMember({"pretrain", "downstream"}));
  sim->add_option("--severities", sim_sev_path);
  sim->add_option("--severity", sim_sev_tag);
  sim->add_option("--out", sim_out)->required();

  // audit
  auto* aud = app.add_subcommand("audit", "audit a generalization bound, write a report");
  std::string aud_theorem, aud_model, aud_pre, aud_shift, aud_down, aud_out, aud_loss = "hinge";
  int aud_k = 1, aud_samples = 200, aud_steps = 1000;
  long long aud_draws = 100000;
  std::uint64_t aud_seed = 0;
  double aud_delta = 0.05;
  double aud_epsilon = -1.0;
  aud->add_option("--theorem", aud_theorem)->required()->check(CLI::IsMember({"4.1", "4.5", "B.1"}));
  aud->add_option("--model", aud_model);
  aud->add_option("--embeddings-pre", aud_pre);
  aud->add_option("--shift", aud_shift);
  aud->add_option("--embeddings-down", aud_down);
  aud->add_option("--loss", aud_loss)->check(CLI::IsMember({"hinge", "logistic"}));
  aud->add_option("--k", aud_k);
  aud->add_option("--draws", aud_draws);
  aud->add_option("--samples", aud_samples);
  aud->add_option("--steps", aud_steps);
  aud->add_option("--seed", aud_seed);
  aud->add_option("--delta", aud_delta);
  aud->add_option("--epsilon", aud_epsilon);
  aud->add_option("--out", aud_out);

  // shift-sweep
  auto* sweep = app.add_subcommand("shift-sweep", "severity sweep: mean shift vs accuracy");
  std::string sw_model, sw_sev, sw_out;
  long long sw_n = 2000;
  std::uint64_t sw_seed = 0;
  sweep->add_option("--model", sw_model)->required();
  sweep->add_option("--severities", sw_sev)->required();
  sweep->add_option("--n", sw_n);
  sweep->add_option("--seed", sw_seed);
  sweep->add_option("--out", sw_out)->required();

  // recover
  auto* rec = app.add_subcommand("recover", "k-means pseudo-mean recovery with alignment");
  std::string rec_pre, rec_down, rec_out, rec_cost = "mean";
  int rec_k = 0;
  std::uint64_t rec_seed = 0;
  rec->add_option("--embeddings-pre", rec_pre)->required();
  rec->add_option("--embeddings-down", rec_down)->required();
  rec->add_option("--k", rec_k);
  rec->add_option("--cost", rec_cost)->check(CLI::IsMember({"mean", "overlap"}));
  rec->add_option("--seed", rec_seed);
  rec->add_option("--out", rec_out)->required();

  // rademacher
  auto* rad = app.add_subcommand("rademacher", "empirical Rademacher complexity and Gen_M");
  std::string rad_model, rad_out, rad_loss = "hinge";
  int rad_k = 1, rad_samples = 200, rad_out_dim = 0;
  double rad_frob = 0.0, rad_delta = 0.05;
  long long rad_draws = 256;
  std::uint64_t rad_seed = 0;
  rad->add_option("--model", rad_model)->required();
  rad->add_option("--k", rad_k);
  rad->add_option("--samples", rad_samples);
  rad->add_option("--frob", rad_frob);
  rad->add_option("--out-dim", rad_out_dim);
  rad->add_option("--draws", rad_draws);
  rad->add_option("--seed", rad_seed);
  rad->add_option("--delta", rad_delta);
  rad->add_option("--loss", rad_loss)->check(CLI::IsMember({"hinge", "logistic"}));
  rad->add_option("--out", rad_out)->required();

  // hull
  auto* hull = app.add_subcommand("hull", "project a downstream mean onto the pretraining hull");
  std::string hull_pre, hull_down, hull_label, hull_out;
  double hull_tol = 1e-8, hull_bias = 0.0, hull_l = 1.0, hull_r = 0.0;
  int hull_iters = 10000;
  hull->add_option("--embeddings-pre", hull_pre)->required();
  hull->add_option("--embeddings-down", hull_down)->required();
  hull->add_option("--target-label", hull_label)->required();
  hull->add_option("--tolerance", hull_tol);
  hull->add_option("--max-iters", hull_iters);
  hull->add_option("--bias-in-dist", hull_bias);
  hull->add_option("--lipschitz", hull_l);
  hull->add_option("--radius", hull_r);
  hull->add_option("--out", hull_out)->required();

  std::vector<std::string> argv_like{"shiftbounds"};
  argv_like.insert(argv_like.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(argv_like.size());
  for (const auto& a : argv_like) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (sim->parsed()) {
      const LatentModel base = read_model(sim_model);
      LatentModel model = base;
      std::string tag;
      if (!sim_sev_tag.empty() || !sim_sev_path.empty()) {
        if (sim_sev_tag.empty() || sim_sev_path.empty())
          throw DataError("simulate: --severities and --severity must be given together");
        const auto steps = read_severities(sim_sev_path);
        const auto it = std::find_if(steps.begin(), steps.end(),
                                     [&](const SeverityStep& s) { return s.tag == sim_sev_tag; });
        if (it == steps.end())
          throw DataError("simulate: severity tag '" + sim_sev_tag + "' not in the list");
        model = shifted_model(base, severity_translation(*it, base.dimension()));
        tag = sim_sev_tag;
      }
      const EmbeddingSet set = simulate_set(
          model, sim_n, sim_seed, sim_split == "downstream" ? Split::downstream : Split::pretrain,
          tag);
      write_embeddings(set, sim_out);
      std::cout << "wrote " << set.rows.size() << " rows to " << sim_out << "\n";
      return kExitOk;
    }
    if (aud->parsed()) {
      if (aud_model.empty() == aud_pre.empty())
        throw DataError("audit: give exactly one of --model and --embeddings-pre");
      if (!aud_shift.empty() && !aud_down.empty())
        throw DataError("audit: give at most one of --shift and --embeddings-down");
      AuditOptions opts;
      opts.loss = aud_loss == "logistic" ? MarginLoss::logistic : MarginLoss::hinge;
      opts.k = aud_k;
      opts.draws = aud_draws;
      opts.sample_size = aud_samples;
      opts.fit_steps = aud_steps;
      opts.confidence_delta = aud_delta;
      opts.seed = aud_seed;
      const AuditInputs in = load_audit_inputs(
          aud_model, aud_pre, aud_shift, aud_down,
          aud_epsilon >= 0.0 ? std::optional<double>(aud_epsilon) : std::nullopt);
      return cmd_audit(aud_theorem, in, opts, aud_out);
    }
    if (sweep->parsed()) return cmd_shift_sweep(sw_model, sw_sev, sw_n, sw_seed, sw_out);
    if (rec->parsed())
      return cmd_recover(rec_pre, rec_down, rec_k, rec_cost, rec_seed, rec_out);
    if (rad->parsed())
      return cmd_rademacher(rad_model, rad_k, rad_samples, rad_frob, rad_out_dim, rad_draws,
                            rad_seed, rad_delta, rad_loss, rad_out);
    if (hull->parsed())
      return cmd_hull(hull_pre, hull_down, hull_label, hull_tol, hull_iters, hull_bias, hull_l,
                      hull_r, hull_out);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace shiftbounds
