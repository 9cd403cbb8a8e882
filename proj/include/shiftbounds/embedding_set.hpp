#pragma once

#include <map>
#include <string>
#include <vector>

#include "shiftbounds/linalg.hpp"

namespace shiftbounds {

enum class Split { pretrain, downstream };

struct EmbeddingRow {
  std::string label;
  Vec vector;
};

/// Labeled embedding vectors with a split tag; the on-disk currency of the
/// CLI (see io.hpp for the CSV format).
struct EmbeddingSet {
  int dimension = 0;
  std::vector<EmbeddingRow> rows;
  Split split = Split::pretrain;
  std::string severity;  // optional tag
};

/// Per-label empirical means. Throws on an empty set.
std::map<std::string, Vec> empirical_class_means(const EmbeddingSet& set);

}  // namespace shiftbounds
