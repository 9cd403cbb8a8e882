#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "shiftbounds/auditor.hpp"
#include "shiftbounds/embedding_set.hpp"
#include "shiftbounds/latent_model.hpp"
#include "shiftbounds/shift.hpp"

namespace shiftbounds {

/// Error raised for malformed or inconsistent input files; the CLI maps it
/// to exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Embedding CSV: UTF-8, header "label,x0,...,x{d-1}", decimal floats.
/// Paths ending in .gz are read/written gzip-compressed. Parse errors name
/// the offending line.
EmbeddingSet read_embeddings(const std::string& path);
void write_embeddings(const EmbeddingSet& set, const std::string& path);

/// Model file: {"prior": [...], "classes": [{"mean": [...], "cov": [[...]]}],
/// "norm_bound": R}.
LatentModel read_model(const std::string& path);
void write_model(const LatentModel& model, const std::string& path);

/// Shift file: {"epsilon": e, "deltas": {"<class index>": [...]}}. Classes
/// absent from the map get a zero delta; deltas longer than epsilon are
/// projected onto the ball.
ShiftProfile read_shift_profile(const std::string& path, int num_classes, int dim);
void write_shift_profile(const ShiftProfile& shift, const std::string& path);

/// Task file: {"classes": [...], "label_dist": [...] (optional)}.
Task read_task(const std::string& path);

/// One step of a severity sweep: either an explicit translation vector or a
/// scale m (a translation of magnitude m along normalize((1,...,1))).
struct SeverityStep {
  std::string tag;
  Vec translation;  // empty when scale-form
  double scale = 0.0;
  bool has_scale = false;
};

std::vector<SeverityStep> read_severities(const std::string& path);

/// Translation vector of a step in dimension d.
Vec severity_translation(const SeverityStep& step, int dim);

/// Gaussian fit of a labeled embedding set: prior from label frequencies,
/// empirical means/covariances (ridge 1e-9 on the diagonal), norm bound at
/// the largest row norm. Labels map to class indices in sorted order.
struct FittedModel {
  LatentModel model;
  std::vector<std::string> labels;
};

FittedModel model_from_embeddings(const EmbeddingSet& set);

/// Report serialization with stable key order (byte-identical across runs
/// with the same seed).
std::string report_to_json(const BoundReport& report, const AuditOptions& options);

/// write-temp-then-rename
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace shiftbounds
