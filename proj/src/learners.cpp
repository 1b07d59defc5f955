#include "tabdistill/learners.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace tabdistill {

Vector predicted_labels(const Matrix& proba) {
  Vector out(proba.rows());
  for (Eigen::Index i = 0; i < proba.rows(); ++i) {
    Eigen::Index c = 0;
    proba.row(i).maxCoeff(&c);
    out(i) = static_cast<double>(c);
  }
  return out;
}

namespace {

std::uint64_t next_random(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  return derive_seed(state, 0);
}

void check_width(const Matrix& rows, int p) {
  if (rows.cols() != p) throw Error("expected rows with " + std::to_string(p) + " features, got " + std::to_string(rows.cols()));
}

int output_width(const Dataset& d) { return is_classification(d.task) ? d.n_classes : 1; }

}  // namespace

// ---------------------------------------------------------------- CART

DecisionTree::DecisionTree(TreeParams params) : params_(params) {
  if (params_.max_depth < 1) throw Error("max_depth must be >= 1, got " + std::to_string(params_.max_depth));
  if (params_.min_leaf < 1) throw Error("min_leaf must be >= 1");
}

DecisionTree train_cart(const Dataset& d, int max_depth, int min_leaf, std::uint64_t seed) {
  DecisionTree tree({max_depth, min_leaf, 1.0, seed});
  tree.fit(d);
  return tree;
}

void DecisionTree::fit(const Dataset& train) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(train.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  fit_rows(train, rows);
}

void DecisionTree::fit_rows(const Dataset& train, const std::vector<Eigen::Index>& rows_in) {
  if (static_cast<int>(rows_in.size()) < 2 * params_.min_leaf)
    throw Error("dataset too small for CART: " + std::to_string(rows_in.size()) + " rows with min_leaf " + std::to_string(params_.min_leaf));
  task_ = train.task;
  n_classes_ = is_classification(task_) ? train.n_classes : 0;
  n_features_ = static_cast<int>(train.cols());
  nodes_.clear();
  auto rows = rows_in;
  std::uint64_t rng = params_.seed;
  build(train, rows, 0, rng);
}

int DecisionTree::build(const Dataset& d, std::vector<Eigen::Index>& rows, int depth, std::uint64_t& rng) {
  const int width = output_width(d);
  const bool classify = is_classification(d.task);
  const auto n = static_cast<double>(rows.size());
  auto target_row = [&](Eigen::Index i, Eigen::RowVectorXd& acc, double sign) {
    if (classify) acc(static_cast<Eigen::Index>(d.target(i))) += sign;
    else acc(0) += sign * d.target(i);
  };
  Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(width);
  for (auto i : rows) target_row(i, total, 1.0);

  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[static_cast<std::size_t>(id)].n_rows = static_cast<int>(rows.size());
  nodes_[static_cast<std::size_t>(id)].value = total / n;

  bool pure = false;
  if (classify) {
    pure = (total.array() == n).any();
  } else {
    const double first = d.target(rows.front());
    pure = std::all_of(rows.begin(), rows.end(), [&](auto i) { return d.target(i) == first; });
  }
  if (pure || depth >= params_.max_depth || static_cast<int>(rows.size()) < 2 * params_.min_leaf) return id;

  // candidate features
  const int p = static_cast<int>(d.cols());
  std::vector<int> features(static_cast<std::size_t>(p));
  std::iota(features.begin(), features.end(), 0);
  if (params_.feature_fraction < 1.0) {
    const int keep = std::max(1, static_cast<int>(std::ceil(params_.feature_fraction * p)));
    for (int i = 0; i < keep; ++i) {
      const auto j = i + static_cast<int>(next_random(rng) % static_cast<std::uint64_t>(p - i));
      std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(j)]);
    }
    features.resize(static_cast<std::size_t>(keep));
    std::sort(features.begin(), features.end());
  }

  const double parent_score = total.squaredNorm() / n;
  double scale = 0.0;
  if (!classify)
    for (auto i : rows) scale += d.target(i) * d.target(i);
  else
    scale = n;
  const double min_gain = 1e-12 * std::max(scale, 1e-300);

  double best_gain = min_gain;
  int best_feature = -1;
  double best_threshold = 0.0;
  std::vector<std::pair<double, Eigen::Index>> sorted(rows.size());
  for (int f : features) {
    for (std::size_t k = 0; k < rows.size(); ++k) sorted[k] = {d.features(rows[k], f), rows[k]};
    std::sort(sorted.begin(), sorted.end());
    Eigen::RowVectorXd left = Eigen::RowVectorXd::Zero(width);
    for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
      target_row(sorted[k].second, left, 1.0);
      const auto nl = static_cast<double>(k + 1), nr = n - nl;
      if (sorted[k].first == sorted[k + 1].first) continue;
      if (nl < params_.min_leaf || nr < params_.min_leaf) continue;
      const double gain = left.squaredNorm() / nl + (total - left).squaredNorm() / nr - parent_score;
      if (gain > best_gain + 1e-12 * std::abs(best_gain)) {
        best_gain = gain;
        best_feature = f;
        best_threshold = 0.5 * (sorted[k].first + sorted[k + 1].first);
        if (best_threshold <= sorted[k].first || best_threshold >= sorted[k + 1].first) best_threshold = sorted[k].first;
      }
    }
  }
  if (best_feature < 0) return id;

  std::vector<Eigen::Index> left_rows, right_rows;
  for (auto i : rows) (d.features(i, best_feature) <= best_threshold ? left_rows : right_rows).push_back(i);
  rows.clear();
  rows.shrink_to_fit();
  const int l = build(d, left_rows, depth + 1, rng);
  const int r = build(d, right_rows, depth + 1, rng);
  auto& node = nodes_[static_cast<std::size_t>(id)];
  node.feature = best_feature;
  node.threshold = best_threshold;
  node.left = l;
  node.right = r;
  return id;
}

Matrix DecisionTree::predict(const Matrix& rows) const {
  check_width(rows, n_features_);
  const int width = is_classification(task_) ? n_classes_ : 1;
  Matrix out(rows.rows(), width);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    int at = 0;
    while (nodes_[static_cast<std::size_t>(at)].feature >= 0) {
      const auto& nd = nodes_[static_cast<std::size_t>(at)];
      at = rows(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    out.row(i) = nodes_[static_cast<std::size_t>(at)].value;
  }
  return out;
}

int DecisionTree::depth() const {
  std::vector<int> level(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& nd = nodes_[i];
    if (nd.feature < 0) continue;
    level[static_cast<std::size_t>(nd.left)] = level[i] + 1;
    level[static_cast<std::size_t>(nd.right)] = level[i] + 1;
    deepest = std::max(deepest, level[i] + 1);
  }
  return deepest;
}

// ---------------------------------------------------------------- forest

RandomForest::RandomForest(ForestParams params) : params_(params) {
  if (params_.n_trees < 1) throw Error("n_trees must be >= 1");
  if (params_.max_depth < 1) throw Error("max_depth must be >= 1");
}

void RandomForest::fit(const Dataset& train) {
  task_ = train.task;
  n_classes_ = is_classification(task_) ? train.n_classes : 0;
  n_features_ = static_cast<int>(train.cols());
  trees_.clear();
  const auto n = static_cast<std::size_t>(train.rows());
  for (int t = 0; t < params_.n_trees; ++t) {
    const auto tree_seed = derive_seed(params_.seed, static_cast<std::uint64_t>(t));
    std::vector<Eigen::Index> rows(n);
    if (params_.bootstrap) {
      std::mt19937_64 rng(tree_seed);
      std::uniform_int_distribution<Eigen::Index> pick(0, static_cast<Eigen::Index>(n) - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    DecisionTree tree({params_.max_depth, params_.min_leaf, params_.feature_fraction, tree_seed});
    tree.fit_rows(train, rows);
    trees_.push_back(std::move(tree));
  }
}

Matrix RandomForest::predict(const Matrix& rows) const {
  check_width(rows, n_features_);
  Matrix out = trees_.front().predict(rows);
  for (std::size_t t = 1; t < trees_.size(); ++t) out += trees_[t].predict(rows);
  return out / static_cast<double>(trees_.size());
}

std::unique_ptr<RandomForest> train_forest(const Dataset& d, int n_trees, int max_depth, double feature_fraction,
                                           std::uint64_t seed) {
  auto forest = std::make_unique<RandomForest>(ForestParams{n_trees, max_depth, 1, feature_fraction, true, seed});
  forest->fit(d);
  return forest;
}

// ---------------------------------------------------------------- GBT

GradientBoostedTrees::GradientBoostedTrees(BoostingParams params) : params_(params) {
  if (params_.n_rounds < 1) throw Error("n_rounds must be >= 1");
  if (params_.depth < 1) throw Error("depth must be >= 1");
  if (!(params_.learning_rate > 0.0 && params_.learning_rate <= 1.0))
    throw Error("learning_rate must lie in (0,1], got " + std::to_string(params_.learning_rate));
}

namespace {

struct BinnedMatrix {
  std::vector<std::vector<double>> cuts;
  std::vector<std::vector<std::uint16_t>> codes;  // per feature, per row
};

BinnedMatrix bin_matrix(const Matrix& x, int max_bins) {
  BinnedMatrix b;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::vector<double> v(x.col(j).data(), x.col(j).data() + x.rows());
    auto cuts = quantile_cuts(v, max_bins);
    std::vector<std::uint16_t> codes(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      codes[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::upper_bound(cuts.begin(), cuts.end(), x(i, j)) - cuts.begin());
    b.cuts.push_back(std::move(cuts));
    b.codes.push_back(std::move(codes));
  }
  return b;
}

struct HistTreeBuilder {
  const BinnedMatrix& bins;
  const std::vector<double>& grad;
  const std::vector<double>& hess;
  const BoostingParams& params;
  GradientBoostedTrees::Tree tree;

  int build(std::vector<std::uint32_t>& rows, int depth) {
    double g = 0, h = 0;
    for (auto r : rows) g += grad[r], h += hess[r];
    const int id = static_cast<int>(tree.size());
    tree.push_back({});
    tree.back().value = -g / (h + params.l2) * params.learning_rate;
    if (depth >= params.depth || static_cast<int>(rows.size()) < 2 * params.min_leaf) return id;

    const double parent = g * g / (h + params.l2);
    double best_gain = 1e-12 * std::max(1.0, parent);
    int best_f = -1, best_bin = -1;
    std::vector<double> hg, hh;
    std::vector<int> hc;
    for (std::size_t f = 0; f < bins.cuts.size(); ++f) {
      const std::size_t nb = bins.cuts[f].size() + 1;
      if (nb < 2) continue;
      hg.assign(nb, 0.0);
      hh.assign(nb, 0.0);
      hc.assign(nb, 0);
      const auto& codes = bins.codes[f];
      for (auto r : rows) {
        const auto c = codes[r];
        hg[c] += grad[r];
        hh[c] += hess[r];
        ++hc[c];
      }
      double gl = 0, hl = 0;
      int cl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hg[b];
        hl += hh[b];
        cl += hc[b];
        const int cr = static_cast<int>(rows.size()) - cl;
        if (hc[b] == 0 && b > 0) continue;
        if (cl < params.min_leaf || cr < params.min_leaf) continue;
        const double gr = g - gl, hr = h - hl;
        const double gain = gl * gl / (hl + params.l2) + gr * gr / (hr + params.l2) - parent;
        if (gain > best_gain + 1e-12 * std::abs(best_gain)) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_bin = static_cast<int>(b);
        }
      }
    }
    if (best_f < 0) return id;
    std::vector<std::uint32_t> left, right;
    const auto& codes = bins.codes[static_cast<std::size_t>(best_f)];
    for (auto r : rows) (codes[r] <= best_bin ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    auto& node = tree[static_cast<std::size_t>(id)];
    node.feature = best_f;
    node.threshold = bins.cuts[static_cast<std::size_t>(best_f)][static_cast<std::size_t>(best_bin)];
    node.left = l;
    node.right = r;
    return id;
  }
};

double tree_value(const GradientBoostedTrees::Tree& tree, const Eigen::RowVectorXd& x) {
  int at = 0;
  while (tree[static_cast<std::size_t>(at)].feature >= 0) {
    const auto& nd = tree[static_cast<std::size_t>(at)];
    at = x(nd.feature) < nd.threshold ? nd.left : nd.right;
  }
  return tree[static_cast<std::size_t>(at)].value;
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

void GradientBoostedTrees::fit(const Dataset& train) {
  if (train.rows() < 2 * params_.min_leaf) throw Error("dataset too small for boosting: " + std::to_string(train.rows()) + " rows");
  task_ = train.task;
  n_classes_ = is_classification(task_) ? train.n_classes : 0;
  n_features_ = static_cast<int>(train.cols());
  const auto bins = bin_matrix(train.features, params_.max_bins);
  const auto n = static_cast<std::size_t>(train.rows());
  const int outputs = task_ == Task::multiclass ? n_classes_ : 1;
  base_score_.resize(outputs);
  models_.assign(static_cast<std::size_t>(outputs), {});

  std::vector<double> grad(n), hess(n);
  for (int o = 0; o < outputs; ++o) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = train.target(static_cast<Eigen::Index>(i));
      y[i] = task_ == Task::regression ? t : (task_ == Task::binary ? t : (static_cast<int>(t) == o ? 1.0 : 0.0));
    }
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double base = mean;
    if (task_ != Task::regression) {
      const double pm = std::clamp(mean, 1e-6, 1.0 - 1e-6);
      base = std::log(pm / (1.0 - pm));
    }
    base_score_(o) = base;
    std::vector<double> score(n, base);
    for (int round = 0; round < params_.n_rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        if (task_ == Task::regression) {
          grad[i] = score[i] - y[i];
          hess[i] = 1.0;
        } else {
          const double pr = sigmoid(score[i]);
          grad[i] = pr - y[i];
          hess[i] = std::max(pr * (1.0 - pr), 1e-12);
        }
      }
      std::vector<std::uint32_t> rows(n);
      std::iota(rows.begin(), rows.end(), 0U);
      HistTreeBuilder builder{bins, grad, hess, params_, {}};
      builder.build(rows, 0);
      Eigen::RowVectorXd row;
      for (std::size_t i = 0; i < n; ++i) {
        row = train.features.row(static_cast<Eigen::Index>(i));
        score[i] += tree_value(builder.tree, row);
      }
      models_[static_cast<std::size_t>(o)].push_back(std::move(builder.tree));
    }
  }
}

Matrix GradientBoostedTrees::decision(const Matrix& rows) const {
  check_width(rows, n_features_);
  Matrix out(rows.rows(), static_cast<Eigen::Index>(models_.size()));
  Eigen::RowVectorXd row;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    row = rows.row(i);
    for (std::size_t o = 0; o < models_.size(); ++o) {
      double s = base_score_(static_cast<Eigen::Index>(o));
      for (const auto& tree : models_[o]) s += tree_value(tree, row);
      out(i, static_cast<Eigen::Index>(o)) = s;
    }
  }
  return out;
}

Matrix GradientBoostedTrees::predict(const Matrix& rows) const {
  Matrix z = decision(rows);
  if (task_ == Task::regression) return z;
  if (task_ == Task::binary) {
    Matrix out(rows.rows(), 2);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      out(i, 1) = sigmoid(z(i, 0));
      out(i, 0) = 1.0 - out(i, 1);
    }
    return out;
  }
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

std::unique_ptr<GradientBoostedTrees> train_gbt(const Dataset& d, int n_rounds, int depth, double learning_rate,
                                                std::uint64_t seed) {
  BoostingParams params;
  params.n_rounds = n_rounds;
  params.depth = depth;
  params.learning_rate = learning_rate;
  params.seed = seed;
  auto model = std::make_unique<GradientBoostedTrees>(params);
  model->fit(d);
  return model;
}

// ---------------------------------------------------------------- ridge

const std::vector<double>& default_ridge_alphas() {
  static const std::vector<double> grid{0.01, 0.1, 1.0, 10.0, 100.0};
  return grid;
}

RidgeCV::RidgeCV(std::vector<double> alphas, int folds) : alphas_(std::move(alphas)), folds_(folds) {
  if (alphas_.empty()) throw Error("ridge needs at least one alpha");
}

namespace {
struct RidgeFit {
  Vector w;
  double b = 0.0;
};

RidgeFit solve_ridge(const Matrix& x, const Vector& y, double alpha) {
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const double my = y.mean();
  const Matrix xc = x.rowwise() - mx;
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += alpha;
  RidgeFit fit;
  fit.w = gram.ldlt().solve(xc.transpose() * (y.array() - my).matrix());
  fit.b = my - mx.dot(fit.w);
  return fit;
}
}  // namespace

void RidgeCV::fit(const Dataset& train) {
  if (train.task != Task::regression) throw Error("ridge regression requires a regression task, got " + to_string(train.task));
  const auto n = train.rows();
  if (n < folds_) throw Error("ridge cross-validation needs at least " + std::to_string(folds_) + " rows, got " + std::to_string(n));
  double best = std::numeric_limits<double>::infinity();
  for (double alpha : alphas_) {
    double mse = 0.0;
    for (int f = 0; f < folds_; ++f) {
      const Eigen::Index lo = n * f / folds_, hi = n * (f + 1) / folds_;
      std::vector<Eigen::Index> tr, va;
      for (Eigen::Index i = 0; i < n; ++i) (i >= lo && i < hi ? va : tr).push_back(i);
      const auto dtr = train.select(tr), dva = train.select(va);
      const auto fit = solve_ridge(dtr.features, dtr.target, alpha);
      const Vector pred = (dva.features * fit.w).array() + fit.b;
      mse += (pred - dva.target).squaredNorm() / static_cast<double>(va.size());
    }
    mse /= folds_;
    if (mse < best) {
      best = mse;
      alpha_ = alpha;
    }
  }
  const auto fit = solve_ridge(train.features, train.target, alpha_);
  weights_ = fit.w;
  intercept_ = fit.b;
}

Matrix RidgeCV::predict(const Matrix& rows) const {
  check_width(rows, static_cast<int>(weights_.size()));
  Matrix out(rows.rows(), 1);
  out.col(0) = (rows * weights_).array() + intercept_;
  return out;
}

std::unique_ptr<RidgeCV> train_ridge_cv(const Dataset& d, std::vector<double> alphas) {
  auto model = std::make_unique<RidgeCV>(std::move(alphas));
  model->fit(d);
  return model;
}

// ---------------------------------------------------------------- kNN

KNearest::KNearest(int k) : k_(k) {
  if (k_ < 1) throw Error("k must be >= 1");
}

void KNearest::fit(const Dataset& train) {
  if (k_ > train.rows()) throw Error("k = " + std::to_string(k_) + " exceeds the " + std::to_string(train.rows()) + " training rows");
  task_ = train.task;
  n_classes_ = is_classification(task_) ? train.n_classes : 0;
  mean_ = train.features.colwise().mean();
  scale_ = ((train.features.rowwise() - mean_).array().square().colwise().sum() / static_cast<double>(train.rows())).sqrt();
  for (Eigen::Index j = 0; j < scale_.size(); ++j)
    if (scale_(j) < 1e-12) scale_(j) = 1.0;
  x_ = (train.features.rowwise() - mean_).array().rowwise() / scale_.array();
  y_ = train.target;
}

Matrix KNearest::predict(const Matrix& rows) const {
  check_width(rows, static_cast<int>(x_.cols()));
  const int width = is_classification(task_) ? n_classes_ : 1;
  Matrix out = Matrix::Zero(rows.rows(), width);
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(x_.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const Eigen::RowVectorXd q = (rows.row(i) - mean_).array() / scale_.array();
    for (Eigen::Index r = 0; r < x_.rows(); ++r) dist[static_cast<std::size_t>(r)] = {(x_.row(r) - q).squaredNorm(), r};
    std::partial_sort(dist.begin(), dist.begin() + k_, dist.end());
    std::vector<std::pair<double, Eigen::Index>> used;
    for (int k = 0; k < k_; ++k)
      if (dist[static_cast<std::size_t>(k)].first == 0.0) used.push_back({1.0, dist[static_cast<std::size_t>(k)].second});
    if (used.empty())
      for (int k = 0; k < k_; ++k) used.push_back({1.0 / std::sqrt(dist[static_cast<std::size_t>(k)].first), dist[static_cast<std::size_t>(k)].second});
    double wsum = 0.0;
    for (auto [w, r] : used) {
      wsum += w;
      if (width == 1 && !is_classification(task_)) out(i, 0) += w * y_(r);
      else out(i, static_cast<Eigen::Index>(y_(r))) += w;
    }
    out.row(i) /= wsum;
  }
  return out;
}

std::unique_ptr<KNearest> train_knn(const Dataset& d, int k) {
  auto model = std::make_unique<KNearest>(k);
  model->fit(d);
  return model;
}

std::unique_ptr<Predictor> make_learner(const std::string& name, std::uint64_t seed) {
  if (name == "cart") return std::make_unique<DecisionTree>(TreeParams{5, 1, 1.0, seed});
  if (name == "forest") {
    ForestParams p;
    p.seed = seed;
    return std::make_unique<RandomForest>(p);
  }
  if (name == "gbt") {
    BoostingParams p;
    p.seed = seed;
    return std::make_unique<GradientBoostedTrees>(p);
  }
  if (name == "ridge") return std::make_unique<RidgeCV>();
  if (name == "knn") return std::make_unique<KNearest>();
  throw Error("unknown learner: " + name);
}

}  // namespace tabdistill
