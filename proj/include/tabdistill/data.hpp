#pragma once

#include "tabdistill/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tabdistill {

enum class Task { regression, binary, multiclass };

std::string to_string(Task t);
Task task_from_string(const std::string& s);
inline bool is_classification(Task t) { return t != Task::regression; }

enum class ColumnKind { numeric, categorical };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  /// Original token for each category code (index = code).
  std::vector<std::string> categories;
};

/// Encoded feature matrix plus target. Categorical features hold their
/// ordinal code as a double; classification targets hold class codes.
struct Dataset {
  Matrix features;
  Vector target;
  Task task = Task::regression;
  std::vector<Column> columns;
  int n_classes = 0;
  std::vector<std::string> class_labels;
  std::string target_name = "y";

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index cols() const { return features.cols(); }

  /// Subset of rows, metadata preserved.
  Dataset select(const std::vector<Eigen::Index>& rows) const;
  /// Same rows, new target (used for pseudo-labels).
  Dataset with_target(Vector y) const;
};

/// Builds a numeric-feature dataset directly from arrays.
Dataset make_dataset(Matrix x, Vector y, Task task, int n_classes = 0);

/// Per-feature cut points. A value v maps to the number of cuts <= v.
struct BinningSpec {
  std::vector<std::vector<double>> cuts;
  int max_bins = 256;

  int n_bins(int feature) const { return static_cast<int>(cuts[feature].size()) + 1; }
  int bin(int feature, double value) const;
};

using BaselineVector = Vector;

Dataset load_csv(const std::string& path, const std::string& target_column,
                 std::optional<Task> task = std::nullopt);

/// Parses RFC-4180 text into rows of fields.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction, std::uint64_t seed);

/// Quantile cut points over one column of values.
std::vector<double> quantile_cuts(std::vector<double> values, int max_bins);
BinningSpec build_bins(const Dataset& d, int max_bins);

BaselineVector baseline_vector(const Dataset& train);

/// Writes a dataset back to CSV (codes decoded to their original tokens).
void write_csv(const Dataset& d, const std::string& path);

}  // namespace tabdistill
