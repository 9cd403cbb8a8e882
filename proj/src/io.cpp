#include "shiftbounds/io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace shiftbounds {

namespace {

bool has_gz_suffix(const std::string& path) {
  return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

std::string read_file(const std::string& path) {
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open '" + path + "'");
    std::string out;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<size_t>(n));
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw DataError("gzip read error on '" + path + "'");
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_raw(const std::string& path, const std::string& content, bool gz) {
  if (gz) {
    gzFile f = gzopen(path.c_str(), "wb9");
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    const int n = gzwrite(f, content.data(), static_cast<unsigned>(content.size()));
    gzclose(f);
    if (n != static_cast<int>(content.size()))
      throw DataError("gzip write error on '" + path + "'");
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw DataError("write error on '" + path + "'");
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& tok, size_t line_no) {
  try {
    size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": cannot parse number '" + tok + "'");
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("JSON parse error in '" + path + "': " + e.what());
  }
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  write_file_raw(tmp, content, has_gz_suffix(path));
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

EmbeddingSet read_embeddings(const std::string& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::string line;
  size_t line_no = 0;

  EmbeddingSet set;
  if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
  ++line_no;
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "label")
    throw DataError("line 1: expected header 'label,x0,...'");
  set.dimension = static_cast<int>(header.size()) - 1;
  for (int i = 0; i < set.dimension; ++i)
    if (header[static_cast<size_t>(i) + 1] != "x" + std::to_string(i))
      throw DataError("line 1: expected column 'x" + std::to_string(i) + "'");

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (static_cast<int>(fields.size()) != set.dimension + 1)
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(set.dimension + 1) + " fields, got " +
                      std::to_string(fields.size()));
    if (fields[0].empty())
      throw DataError("line " + std::to_string(line_no) + ": empty label");
    EmbeddingRow row;
    row.label = fields[0];
    row.vector.resize(static_cast<size_t>(set.dimension));
    for (int i = 0; i < set.dimension; ++i)
      row.vector[static_cast<size_t>(i)] = parse_double(fields[static_cast<size_t>(i) + 1], line_no);
    set.rows.push_back(std::move(row));
  }
  return set;
}

void write_embeddings(const EmbeddingSet& set, const std::string& path) {
  std::string out = "label";
  for (int i = 0; i < set.dimension; ++i) out += ",x" + std::to_string(i);
  out += "\n";
  for (const auto& row : set.rows) {
    out += row.label;
    for (double v : row.vector) {
      out += ',';
      out += fmt17(v);
    }
    out += "\n";
  }
  write_text_atomic(path, out);
}

LatentModel read_model(const std::string& path) {
  const auto j = parse_json_file(path);
  try {
    Vec prior = j.at("prior").get<Vec>();
    std::vector<ClassDistribution> classes;
    for (const auto& cj : j.at("classes")) {
      ClassDistribution dist;
      dist.mean = cj.at("mean").get<Vec>();
      const auto rows = cj.at("cov").get<std::vector<Vec>>();
      const int d = static_cast<int>(dist.mean.size());
      if (static_cast<int>(rows.size()) != d)
        throw DataError("'" + path + "': cov row count != mean dimension");
      dist.covariance = Mat(d, d);
      for (int r = 0; r < d; ++r) {
        if (static_cast<int>(rows[static_cast<size_t>(r)].size()) != d)
          throw DataError("'" + path + "': ragged covariance row");
        for (int c = 0; c < d; ++c)
          dist.covariance(r, c) = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
      }
      classes.push_back(std::move(dist));
    }
    const double norm_bound = j.at("norm_bound").get<double>();
    return LatentModel(ClassPrior(std::move(prior)), std::move(classes), norm_bound);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

void write_model(const LatentModel& model, const std::string& path) {
  nlohmann::ordered_json j;
  j["prior"] = model.prior().probs();
  j["classes"] = nlohmann::json::array();
  for (int c = 0; c < model.num_classes(); ++c) {
    nlohmann::ordered_json cj;
    cj["mean"] = model.class_dist(c).mean;
    std::vector<Vec> rows;
    for (int r = 0; r < model.dimension(); ++r) {
      Vec row(static_cast<size_t>(model.dimension()));
      for (int k = 0; k < model.dimension(); ++k) row[static_cast<size_t>(k)] = model.class_dist(c).covariance(r, k);
      rows.push_back(std::move(row));
    }
    cj["cov"] = rows;
    j["classes"].push_back(cj);
  }
  j["norm_bound"] = model.norm_bound();
  write_text_atomic(path, j.dump(2) + "\n");
}

ShiftProfile read_shift_profile(const std::string& path, int num_classes, int dim) {
  const auto j = parse_json_file(path);
  try {
    ShiftProfile p = ShiftProfile::zero(num_classes, dim);
    p.epsilon = j.at("epsilon").get<double>();
    if (p.epsilon < 0.0) throw DataError("'" + path + "': epsilon must be nonnegative");
    if (j.contains("deltas")) {
      for (const auto& [key, val] : j.at("deltas").items()) {
        int idx = 0;
        try {
          idx = std::stoi(key);
        } catch (const std::exception&) {
          throw DataError("'" + path + "': delta key '" + key + "' is not a class index");
        }
        if (idx < 0 || idx >= num_classes)
          throw DataError("'" + path + "': delta class " + key + " out of range");
        Vec d = val.get<Vec>();
        if (static_cast<int>(d.size()) != dim)
          throw DataError("'" + path + "': delta dimension mismatch for class " + key);
        const double n = norm(d);
        if (n > p.epsilon && n > 0.0) {
          // project onto the epsilon ball
          for (double& v : d) v *= p.epsilon / n;
        }
        p.deltas[static_cast<size_t>(idx)] = std::move(d);
      }
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

void write_shift_profile(const ShiftProfile& shift, const std::string& path) {
  nlohmann::ordered_json j;
  j["epsilon"] = shift.epsilon;
  nlohmann::ordered_json deltas;
  for (size_t c = 0; c < shift.deltas.size(); ++c)
    deltas[std::to_string(c)] = shift.deltas[c];
  j["deltas"] = deltas;
  write_text_atomic(path, j.dump(2) + "\n");
}

Task read_task(const std::string& path) {
  const auto j = parse_json_file(path);
  try {
    std::vector<int> classes = j.at("classes").get<std::vector<int>>();
    Vec dist;
    if (j.contains("label_dist")) dist = j.at("label_dist").get<Vec>();
    return make_task(std::move(classes), std::move(dist));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

std::vector<SeverityStep> read_severities(const std::string& path) {
  const auto j = parse_json_file(path);
  if (!j.is_array()) throw DataError("'" + path + "': expected a JSON list of severities");
  std::vector<SeverityStep> out;
  for (const auto& sj : j) {
    SeverityStep step;
    try {
      step.tag = sj.at("tag").get<std::string>();
      if (sj.contains("translation")) {
        step.translation = sj.at("translation").get<Vec>();
      } else if (sj.contains("scale")) {
        step.scale = sj.at("scale").get<double>();
        step.has_scale = true;
      } else {
        throw DataError("'" + path + "': severity '" + step.tag +
                        "' needs a translation or a scale");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("'" + path + "': " + e.what());
    }
    out.push_back(std::move(step));
  }
  if (out.empty()) throw DataError("'" + path + "': empty severity list");
  return out;
}

Vec severity_translation(const SeverityStep& step, int dim) {
  if (!step.has_scale) {
    if (static_cast<int>(step.translation.size()) != dim)
      throw DataError("severity '" + step.tag + "': translation dimension mismatch");
    return step.translation;
  }
  Vec t(static_cast<size_t>(dim), 1.0 / std::sqrt(static_cast<double>(dim)));
  for (double& v : t) v *= step.scale;
  return t;
}

FittedModel model_from_embeddings(const EmbeddingSet& set) {
  if (set.rows.empty()) throw DataError("model_from_embeddings: empty embedding set");
  const auto means = empirical_class_means(set);

  std::map<std::string, long long> counts;
  double max_norm = 0.0;
  for (const auto& row : set.rows) {
    ++counts[row.label];
    max_norm = std::max(max_norm, norm(row.vector));
  }
  std::vector<std::string> labels;
  for (const auto& [label, n] : counts) labels.push_back(label);
  if (labels.size() < 2) throw DataError("model_from_embeddings: need at least 2 classes");

  const int d = set.dimension;
  Vec prior;
  std::vector<ClassDistribution> classes;
  for (const auto& label : labels) {
    prior.push_back(static_cast<double>(counts[label]) / static_cast<double>(set.rows.size()));
    ClassDistribution dist;
    dist.mean = means.at(label);
    dist.covariance = Mat(d, d);
    for (const auto& row : set.rows) {
      if (row.label != label) continue;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          dist.covariance(a, b) +=
              (row.vector[static_cast<size_t>(a)] - dist.mean[static_cast<size_t>(a)]) *
              (row.vector[static_cast<size_t>(b)] - dist.mean[static_cast<size_t>(b)]);
    }
    const double denom = std::max<long long>(1, counts[label] - 1);
    for (double& v : dist.covariance.data) v /= static_cast<double>(denom);
    for (int a = 0; a < d; ++a) dist.covariance(a, a) += 1e-9;
    classes.push_back(std::move(dist));
  }
  double psum = 0.0;
  for (double v : prior) psum += v;
  prior.back() += 1.0 - psum;

  return FittedModel{
      LatentModel(ClassPrior(std::move(prior)), std::move(classes), max_norm + 1e-9),
      std::move(labels)};
}

namespace {

nlohmann::ordered_json estimate_json(const Estimate& e) {
  nlohmann::ordered_json j;
  j["estimate"] = e.value;
  j["std_error"] = e.std_error;
  j["draws"] = e.draws;
  return j;
}

}  // namespace

std::string report_to_json(const BoundReport& report, const AuditOptions& options) {
  nlohmann::ordered_json j;
  j["theorem"] = report.theorem;
  j["loss"] = options.loss == MarginLoss::hinge ? "hinge" : "logistic";
  j["k"] = options.k;
  j["seed"] = options.seed;
  j["draws"] = options.draws;
  j["samples"] = options.sample_size;
  j["confidence_delta"] = options.confidence_delta;
  j["lhs"] = estimate_json(report.lhs);
  nlohmann::ordered_json terms;
  for (const auto& [name, est] : report.rhs_terms) terms[name] = estimate_json(est);
  j["rhs_terms"] = terms;
  j["rhs_total"] = estimate_json(report.rhs_total);
  j["slack"] = report.slack;
  j["verdict"] = verdict_name(report.verdict);
  nlohmann::ordered_json consts;
  for (const auto& [name, v] : report.constants) consts[name] = v;
  j["constants"] = consts;
  return j.dump(2) + "\n";
}

}  // namespace shiftbounds
