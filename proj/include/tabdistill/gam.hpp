#pragma once

#include "tabdistill/data.hpp"
#include "tabdistill/learners.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace tabdistill {

enum class Link { identity, logit, softmax };
std::string to_string(Link l);

struct GamTrainConfig {
  int max_bins = 256;
  int pair_bins = 32;    ///< bins per dimension for order-2 terms
  int triple_bins = 8;   ///< bins per dimension for order-3 terms
  int outer_bags = 4;
  double learning_rate = 0.05;
  int max_rounds = 3000;
  int patience = 50;
  /// Each per-round term update is a piecewise-constant fit with at most
  /// this many boxes on the term's bin grid.
  int max_leaves = 3;
  double min_samples_leaf = 2.0;
  double validation_fraction = 0.15;
  std::uint64_t seed = 0;
  int jobs = 0;

  void validate() const;
};

nlohmann::json to_json(const GamTrainConfig& c);
GamTrainConfig gam_config_from_json(const nlohmann::json& j, GamTrainConfig base = {});

/// One shape function: a value table over the grid of per-feature bins.
/// Cell index is sum_d bin_d * stride_d with the first feature fastest.
struct GamTerm {
  Subset features;
  std::vector<std::vector<double>> cuts;  ///< per feature; value v -> #cuts <= v
  Matrix table;                           ///< cells x n_scores

  int n_bins(std::size_t d) const { return static_cast<int>(cuts[d].size()) + 1; }
  Eigen::Index cell(RowRef row) const;
};

struct BagLog {
  std::vector<double> train_loss;       ///< after each completed round
  std::vector<double> validation_loss;
  int best_round = 0;                   ///< rounds kept (0 = intercept only)
};

struct GamModel {
  Task task = Task::regression;
  int n_classes = 0;
  Link link = Link::identity;
  int n_features = 0;
  Eigen::RowVectorXd intercept;  ///< one entry per score column
  std::vector<GamTerm> terms;    ///< univariate terms first, then interactions
  GamTrainConfig config;
  std::vector<BagLog> logs;

  int n_scores() const { return static_cast<int>(intercept.size()); }
  const GamTerm& term(const Subset& s) const;
  std::vector<Subset> interactions() const;
};

GamModel fit_gam(const Dataset& train, const std::vector<Subset>& interactions, const GamTrainConfig& cfg = {});

/// Pre-link additive scores: intercept plus every term lookup.
Matrix gam_scores(const GamModel& m, const Matrix& rows);
/// Link applied: N x 1 values (regression) or N x C probabilities.
Matrix predict_gam(const GamModel& m, const Matrix& rows);
/// The single table lookup for one term, one entry per score column.
Eigen::RowVectorXd term_contribution(const GamModel& m, const Subset& s, const Eigen::RowVectorXd& x);

struct ScoredPair {
  Subset pair;
  double score = 0.0;
};

/// FAST: binned residual-sum-of-squares gain of each pair over its best
/// single-feature binned fit, highest first.
std::vector<ScoredPair> fast_select_pairs(const Dataset& train, const GamModel& additive, int n_pairs, int bins_per_dim = 8);

nlohmann::json to_json(const GamModel& m);
GamModel gam_from_json(const nlohmann::json& j);
/// Long-format table of one term: bin indices, bin ranges, value columns.
std::string term_csv(const GamModel& m, const GamTerm& t, const std::vector<Column>& columns = {});

/// Predictor adapter: a GAM with a fixed interaction list.
class GamPredictor final : public Predictor {
 public:
  explicit GamPredictor(std::vector<Subset> interactions = {}, GamTrainConfig cfg = {})
      : interactions_(std::move(interactions)), cfg_(cfg) {}
  void fit(const Dataset& train) override { model_ = fit_gam(train, interactions_, cfg_); }
  Matrix predict(const Matrix& rows) const override { return predict_gam(model_, rows); }
  Task task() const override { return model_.task; }
  int n_classes() const override { return model_.n_classes; }
  int n_features() const override { return model_.n_features; }
  std::string name() const override { return "gam"; }
  const GamModel& model() const { return model_; }

 private:
  std::vector<Subset> interactions_;
  GamTrainConfig cfg_;
  GamModel model_;
};

}  // namespace tabdistill
