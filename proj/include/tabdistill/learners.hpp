#pragma once

#include "tabdistill/common.hpp"
#include "tabdistill/data.hpp"

#include <memory>
#include <string>
#include <vector>

namespace tabdistill {

/// Uniform contract for teachers and baselines. predict returns an N x 1
/// matrix of values for regression, or N x C class probabilities.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual void fit(const Dataset& train) = 0;
  virtual Matrix predict(const Matrix& rows) const = 0;
  virtual Task task() const = 0;
  virtual int n_classes() const = 0;
  virtual int n_features() const = 0;
  virtual std::string name() const = 0;
};

/// Converts per-row class probabilities to hard labels.
Vector predicted_labels(const Matrix& proba);

// ---------------------------------------------------------------- CART

struct TreeParams {
  int max_depth = 5;
  int min_leaf = 1;
  double feature_fraction = 1.0;  ///< share of features tried per split
  std::uint64_t seed = 0;
};

class DecisionTree final : public Predictor {
 public:
  struct Node {
    int feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;  ///< rows with x <= threshold go left
    int left = -1, right = -1;
    int n_rows = 0;
    Eigen::RowVectorXd value;  ///< leaf mean (1 col) or class distribution
  };

  explicit DecisionTree(TreeParams params = {});

  void fit(const Dataset& train) override;
  /// Fits on the given row indices (repeats allowed, as in a bootstrap).
  void fit_rows(const Dataset& train, const std::vector<Eigen::Index>& rows);
  Matrix predict(const Matrix& rows) const override;
  Task task() const override { return task_; }
  int n_classes() const override { return n_classes_; }
  int n_features() const override { return n_features_; }
  std::string name() const override { return "cart"; }

  const std::vector<Node>& nodes() const { return nodes_; }
  int depth() const;
  const TreeParams& params() const { return params_; }

 private:
  int build(const Dataset& d, std::vector<Eigen::Index>& rows, int depth, std::uint64_t& rng_state);

  TreeParams params_;
  std::vector<Node> nodes_;
  Task task_ = Task::regression;
  int n_classes_ = 0;
  int n_features_ = 0;
};

DecisionTree train_cart(const Dataset& d, int max_depth, int min_leaf = 1, std::uint64_t seed = 0);

// ---------------------------------------------------------------- forest

struct ForestParams {
  int n_trees = 100;
  int max_depth = 10;
  int min_leaf = 1;
  double feature_fraction = 1.0;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

class RandomForest final : public Predictor {
 public:
  explicit RandomForest(ForestParams params = {});
  void fit(const Dataset& train) override;
  Matrix predict(const Matrix& rows) const override;
  Task task() const override { return task_; }
  int n_classes() const override { return n_classes_; }
  int n_features() const override { return n_features_; }
  std::string name() const override { return "forest"; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  ForestParams params_;
  std::vector<DecisionTree> trees_;
  Task task_ = Task::regression;
  int n_classes_ = 0;
  int n_features_ = 0;
};

std::unique_ptr<RandomForest> train_forest(const Dataset& d, int n_trees = 100, int max_depth = 10,
                                           double feature_fraction = 1.0, std::uint64_t seed = 0);

// ---------------------------------------------------------------- GBT

struct BoostingParams {
  int n_rounds = 200;
  int depth = 3;
  double learning_rate = 0.1;
  double l2 = 1.0;
  int min_leaf = 1;
  int max_bins = 256;
  std::uint64_t seed = 0;
};

/// Histogram gradient boosting. Squared loss for regression, logistic
/// loss per class (one-vs-rest) for classification with softmax
/// normalisation of the class scores.
class GradientBoostedTrees final : public Predictor {
 public:
  struct Node {
    int feature = -1;
    double threshold = 0.0;  ///< rows with x < threshold go left
    int left = -1, right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  explicit GradientBoostedTrees(BoostingParams params = {});
  void fit(const Dataset& train) override;
  Matrix predict(const Matrix& rows) const override;
  /// Raw additive scores, one column per boosted model.
  Matrix decision(const Matrix& rows) const;
  Task task() const override { return task_; }
  int n_classes() const override { return n_classes_; }
  int n_features() const override { return n_features_; }
  std::string name() const override { return "gbt"; }

 private:
  BoostingParams params_;
  Task task_ = Task::regression;
  int n_classes_ = 0;
  int n_features_ = 0;
  Vector base_score_;
  std::vector<std::vector<Tree>> models_;  ///< one tree list per output column
};

std::unique_ptr<GradientBoostedTrees> train_gbt(const Dataset& d, int n_rounds = 200, int depth = 3,
                                                double learning_rate = 0.1, std::uint64_t seed = 0);

// ---------------------------------------------------------------- ridge

const std::vector<double>& default_ridge_alphas();

class RidgeCV final : public Predictor {
 public:
  explicit RidgeCV(std::vector<double> alphas = default_ridge_alphas(), int folds = 5);
  void fit(const Dataset& train) override;
  Matrix predict(const Matrix& rows) const override;
  Task task() const override { return Task::regression; }
  int n_classes() const override { return 0; }
  int n_features() const override { return static_cast<int>(weights_.size()); }
  std::string name() const override { return "ridge"; }

  double alpha() const { return alpha_; }
  const Vector& weights() const { return weights_; }
  double intercept() const { return intercept_; }

 private:
  std::vector<double> alphas_;
  int folds_;
  double alpha_ = 1.0;
  Vector weights_;
  double intercept_ = 0.0;
};

std::unique_ptr<RidgeCV> train_ridge_cv(const Dataset& d, std::vector<double> alphas = default_ridge_alphas());

// ---------------------------------------------------------------- kNN

class KNearest final : public Predictor {
 public:
  explicit KNearest(int k = 5);
  void fit(const Dataset& train) override;
  Matrix predict(const Matrix& rows) const override;
  Task task() const override { return task_; }
  int n_classes() const override { return n_classes_; }
  int n_features() const override { return static_cast<int>(x_.cols()); }
  std::string name() const override { return "knn"; }

 private:
  int k_;
  Matrix x_;
  Vector y_;
  Eigen::RowVectorXd mean_, scale_;
  Task task_ = Task::regression;
  int n_classes_ = 0;
};

std::unique_ptr<KNearest> train_knn(const Dataset& d, int k = 5);

/// Builds an unfitted built-in learner by name: cart, forest, gbt, ridge, knn.
std::unique_ptr<Predictor> make_learner(const std::string& name, std::uint64_t seed = 0);

}  // namespace tabdistill
