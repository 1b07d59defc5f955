#pragma once

#include "tabdistill/data.hpp"
#include "tabdistill/distill.hpp"
#include "tabdistill/gam.hpp"
#include "tabdistill/learners.hpp"
#include "tabdistill/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tabdistill {

// ---------------------------------------------------------------- metrics

using MetricMap = std::map<std::string, double>;

/// MSE, MAE, R2 for regression; accuracy, F1 (macro for multiclass) and
/// AUROC (one-vs-rest macro for multiclass) for classification. AUROC is
/// left out when a class has no positives or no negatives.
MetricMap metrics(const Matrix& pred, const Vector& truth, Task task, int n_classes = 0);

/// Rank-based AUROC with tied scores counted as one half.
std::optional<double> auroc(const Vector& score, const Vector& positive);

bool lower_is_better(const std::string& metric);
std::vector<std::string> metric_names(Task task);

// ---------------------------------------------------------------- reports

struct MetricRecord {
  std::string dataset;
  std::string method;
  std::string metric;
  int n_int = 0;
  std::uint64_t seed = 0;
  double value = 0.0;
  std::string axis;  ///< swept parameter for scenario runs, else empty
  double param = 0.0;
};

struct MetricReport {
  std::vector<MetricRecord> records;
  std::map<std::string, double> timings;  ///< seconds per stage
  std::vector<std::string> notes;

  void append(const MetricReport& other);
  /// Deterministic order: dataset, axis value, method, N_int, metric, seed.
  void sort();
  std::string to_csv() const;
  static MetricReport from_csv(const std::string& text);
};

/// Average ranks (1 = best); tied values share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values, bool lower_better);

struct RankTable {
  std::vector<std::string> methods;
  int n_datasets = 0;
  /// (metric, N_int) -> method -> mean rank over datasets
  std::map<std::pair<std::string, int>, std::map<std::string, double>> ranks;
  std::vector<std::string> notes;

  std::string to_csv() const;
};

/// Values are first averaged over seeds; throws naming any missing cell.
RankTable rank_methods(const MetricReport& report);

struct Overlap {
  double value = 0.0;
  bool flagged = false;  ///< fewer than `top` interactions on either side
};

Overlap overlap_stability(const std::vector<Subset>& a, const std::vector<Subset>& reference, std::size_t top = 8);

// ---------------------------------------------------------------- cache

/// Content-addressed store of finished cells (one JSON file per key).
class CellCache {
 public:
  explicit CellCache(std::filesystem::path dir = {});
  bool enabled() const { return !dir_.empty(); }
  std::optional<nlohmann::json> load(const std::string& key) const;
  void store(const std::string& key, const nlohmann::json& value) const;
  int hits() const { return hits_; }

 private:
  std::filesystem::path dir_;
  mutable int hits_ = 0;
};

std::string dataset_digest(const Dataset& d);

// ---------------------------------------------------------------- methods

inline const std::string kFastMethod = "FAST";

/// Canonical spelling of a method name ("fbii" -> "FBII", "fast" -> "FAST").
std::string canonical_method(const std::string& name);

/// All seven index kinds followed by FAST.
std::vector<std::string> default_methods();

struct SelectionSetup {
  DistillConfig distill;
  GamTrainConfig gam;
  std::string teacher = "gbt";  ///< built-in learner name or external endpoint
  int fast_bins = 8;
};

/// Builds and fits the teacher: built-in learner name, or a command line
/// / tcp:// address for an external bridge.
std::unique_ptr<Predictor> fit_teacher(const std::string& teacher, const Dataset& train, std::uint64_t seed);

/// Interaction list per method, each at most `max_n` long.
std::map<std::string, std::vector<Subset>> select_interactions(const Dataset& train, const Predictor* teacher,
                                                               const std::vector<std::string>& methods, int max_n,
                                                               const SelectionSetup& setup, std::uint64_t seed);

// ---------------------------------------------------------------- runners

struct ScenarioAOptions {
  std::vector<std::string> learners{"ridge", "forest", "knn", "gbt", "tabdistill_gam"};
  int n_interactions = 3;
  int min_order = 1;
  SelectionSetup setup;
  std::filesystem::path cache_dir;
  int jobs = 1;
};

MetricReport run_scenario_a(const std::vector<ScenarioGrid>& grids, const std::vector<std::uint64_t>& seeds,
                            const ScenarioAOptions& opts);
/// Plot-ready rows: experiment, axis, value, learner, seed, r2.
std::string scenario_a_csv(const MetricReport& report);

struct ScenarioBOptions {
  int n_samples = 10000;
  int p = 15;
  int p_inf = 10;
  int n_interactions = 10;  ///< budget set to p_inf
  SelectionSetup setup;
  std::filesystem::path cache_dir;
  int jobs = 1;
};

MetricReport run_scenario_b(const std::vector<int>& depths, const std::vector<std::uint64_t>& seeds,
                            const ScenarioBOptions& opts);
/// Plot-ready rows: depth, student, seed, accuracy, auroc, f1.
std::string scenario_b_csv(const MetricReport& report);

struct BenchmarkDataset {
  std::string name;
  Dataset data;
};

/// Loads a CSV; the target is the named column or, if empty, the last one.
BenchmarkDataset load_benchmark_dataset(const std::string& path, const std::string& target = "");

struct BenchmarkOptions {
  std::vector<std::string> methods = default_methods();
  int max_interactions = 8;  ///< N_int sweeps 1..max_interactions
  double train_fraction = 0.8;
  SelectionSetup setup;
  std::filesystem::path cache_dir;
  int jobs = 1;
};

struct BenchmarkResult {
  MetricReport report;
  RankTable ranks;
  std::vector<std::string> failures;  ///< cells excluded after an error
  std::map<std::string, std::map<std::string, std::vector<Subset>>> selections;  ///< "dataset/seed" -> method -> list
};

BenchmarkResult run_benchmark(const std::vector<BenchmarkDataset>& datasets, const std::vector<std::uint64_t>& seeds,
                              const BenchmarkOptions& opts);

struct StabilityOptions {
  std::vector<int> budgets{100, 200, 300, 400, 500};
  int reference = 500;
  std::vector<std::string> methods = default_methods();
  std::size_t top = 8;
  SelectionSetup setup;
};

struct StabilityTable {
  std::vector<std::string> methods;
  std::vector<int> budgets;
  Matrix overlap;  ///< methods x budgets
  std::vector<std::vector<bool>> flagged;

  std::string to_csv() const;
};

/// Overlap of each budget's top set with the reference budget's, per
/// method. For index methods a budget is the per-sample query count; for
/// FAST it is the size of a seeded row subsample.
StabilityTable run_stability(const Dataset& train, const StabilityOptions& opts, std::uint64_t seed);

}  // namespace tabdistill
