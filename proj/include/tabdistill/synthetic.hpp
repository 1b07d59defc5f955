#pragma once

#include "tabdistill/data.hpp"
#include "tabdistill/learners.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace tabdistill {

/// y = sum_i c_i chi_{S_i}(x) + eps on uniform bits x in {0,1}^n.
struct FourierTask {
  int n = 0;
  int k = 0;
  double sigma = 0.0;
  std::vector<Subset> subsets;  ///< the empty set first
  Vector coefficients;
  Dataset train, test;
  std::uint64_t seed = 0;

  /// Noise-free target at one row.
  double truth(RowRef x) const;
  /// Generating subsets with at least two features.
  std::vector<Subset> interactions() const;
};

struct FourierOptions {
  int n = 10;
  int k = 3;
  double sigma = 0.0;
  int n_train = 400;
  int n_test = 200;
  /// Smallest size for the non-constant subsets (0 or 1: any size <= 3).
  int min_order = 1;
  std::uint64_t seed = 0;
};

/// The noise for a given seed is sigma * z with z fixed by the seed, so
/// sweeps over sigma share features, subsets, coefficients and z.
FourierTask gen_fourier_sparse(const FourierOptions& o);
FourierTask gen_fourier_sparse(int n, int k, double sigma, int n_train, int n_test, std::uint64_t seed);

struct ScenarioCell {
  std::string experiment;
  int n = 0;
  int k = 0;
  double sigma = 0.0;
  int n_train = 0;
  int n_test = 0;

  double ambient_basis() const { return std::ldexp(1.0, n); }
};

struct ScenarioGrid {
  std::string name;   ///< exp1, exp2, exp3
  std::string axis;   ///< swept parameter: n_train, sigma, k
  std::vector<ScenarioCell> cells;
};

std::vector<ScenarioGrid> scenario_a_grids();

Dataset gen_cluster_classification(int n, int p, int p_inf, std::uint64_t seed);

struct TreeTask {
  int depth = 0;
  DecisionTree teacher;
  Dataset train, test;          ///< targets are the teacher's labels
  Vector train_original, test_original;
  std::uint64_t seed = 0;
};

TreeTask make_tree_task(const Dataset& d, int depth, std::uint64_t seed);

nlohmann::json to_json(const FourierTask& t);
FourierTask fourier_task_from_json(const nlohmann::json& j);

}  // namespace tabdistill
