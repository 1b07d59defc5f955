#pragma once

#include "tabdistill/data.hpp"
#include "tabdistill/fourier.hpp"
#include "tabdistill/indices.hpp"
#include "tabdistill/learners.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tabdistill {

/// How a masked-out feature is filled when querying the teacher.
///   baseline: substitute the training mean (numeric) or mode (categorical).
///   marginal: average the teacher over a fixed background sample of
///             training rows, each supplying the masked features.
enum class MaskingPolicy { baseline, marginal };

std::string to_string(MaskingPolicy m);
MaskingPolicy masking_from_string(const std::string& s);

struct DistillConfig {
  int max_order = 3;      ///< K
  int budget = 500;       ///< B, distinct masks per sample
  int max_support = 20;
  int n_explain = 100;    ///< capped at N; <= 0 explains every row
  int per_sample_top = 5; ///< r
  /// Entries at or below this |score| are not counted (0 keeps every entry
  /// that is numerically non-zero).
  double min_abs_score = 0.0;
  IndexKind index = IndexKind::fbii;
  int n_interactions = 10;  ///< N_int
  MaskingPolicy masking = MaskingPolicy::marginal;
  int background_size = 64;
  std::uint64_t seed = 0;
  int jobs = 0;  ///< 0 means default_jobs()

  void validate() const;
};

nlohmann::json to_json(const DistillConfig& c);
DistillConfig distill_config_from_json(const nlohmann::json& j, DistillConfig base = {});

/// Training-set facts the value function needs: target scale for
/// regression and the masking fill values.
struct MaskingContext {
  Task task = Task::regression;
  int n_classes = 0;
  double target_mean = 0.0;
  double target_scale = 1.0;
  MaskingPolicy policy = MaskingPolicy::marginal;
  BaselineVector baseline;
  Matrix background;  ///< rows used by the marginal policy

  static MaskingContext from_training(const Dataset& train, MaskingPolicy policy, int background_size, std::uint64_t seed);
};

inline constexpr double kProbClip = 1e-6;

/// Scalar the explanation is about, computed from one teacher output row.
double value_of(const MaskingContext& ctx, RowRef out, int label);

/// Masked-query value function for one sample. Mask bit j = 1 keeps x_j.
BatchValueFn value_function(const Predictor& teacher, const Eigen::RowVectorXd& x, double y, const MaskingContext& ctx);

struct SampleDiagnostics {
  Eigen::Index row = 0;
  double holdout_r2 = 0.0;
  int queries = 0;
  int support_size = 0;
  int active_size = 0;
  bool fell_back = false;  ///< index replaced by FBII (active set too large)
};

struct SampleExplanation {
  std::map<IndexKind, IndexScores> scores;  ///< subsets with |S| >= 2 only
  SampleDiagnostics diagnostics;
  FourierSurrogate surrogate;
};

/// Fits one surrogate for the sample and scores it with every requested kind.
SampleExplanation explain_sample_multi(const Predictor& teacher, const Eigen::RowVectorXd& x, double y,
                                       const MaskingContext& ctx, const DistillConfig& cfg,
                                       const std::vector<IndexKind>& kinds, std::uint64_t sample_seed);

IndexScores explain_sample(const Predictor& teacher, const Eigen::RowVectorXd& x, double y, const MaskingContext& ctx,
                           const DistillConfig& cfg, std::uint64_t sample_seed);

struct RankedInteraction {
  Subset subset;
  int count = 0;
  double mass = 0.0;
};

struct InteractionRanking {
  std::vector<RankedInteraction> interactions;
  std::string config_digest;
  std::string teacher_digest;
  IndexKind index = IndexKind::fbii;
  std::vector<SampleDiagnostics> diagnostics;

  std::vector<Subset> subsets() const;
  InteractionRanking truncated(std::size_t n) const;
};

/// Per-sample top-r counting and |score| mass accumulation.
InteractionRanking aggregate(const std::vector<IndexScores>& per_sample, int r, double min_abs_score = 0.0);

/// Rows chosen for explanation: seeded shuffle, first n_explain.
std::vector<Eigen::Index> explained_rows(Eigen::Index n_rows, int n_explain, std::uint64_t seed);

/// Fingerprint of a fitted teacher: its outputs on a few training rows.
std::string teacher_digest(const Predictor& teacher, const Dataset& train);

InteractionRanking distill(const Dataset& train, const Predictor& teacher, const DistillConfig& cfg);

/// One surrogate per explained sample, shared by every index kind.
std::map<IndexKind, InteractionRanking> distill_multi(const Dataset& train, const Predictor& teacher,
                                                      const DistillConfig& cfg, const std::vector<IndexKind>& kinds);

nlohmann::json to_json(const InteractionRanking& r, const Dataset& train, const DistillConfig& cfg);

}  // namespace tabdistill
