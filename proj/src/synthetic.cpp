#include "tabdistill/synthetic.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace tabdistill {

namespace {

double chi(const Subset& s, RowRef x) {
  int ones = 0;
  for (int j : s) ones += x(j) > 0.5 ? 1 : 0;
  return ones % 2 ? -1.0 : 1.0;
}

// independent streams so that changing sigma or sizes leaves the rest fixed
enum Stream : std::uint64_t { kSubsets = 1, kCoefs = 2, kTrainX = 3, kTestX = 4, kTrainNoise = 5, kTestNoise = 6 };

Dataset sample(const FourierTask& t, int rows, Stream xs, Stream zs) {
  std::mt19937_64 bits(derive_seed(t.seed, xs)), noise(derive_seed(t.seed, zs));
  std::normal_distribution<double> z;
  Matrix x(rows, t.n);
  Vector y(rows);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < t.n; ++j) x(i, j) = static_cast<double>(bits() & 1U);
    y(i) = t.truth(x.row(i)) + t.sigma * z(noise);
  }
  return make_dataset(std::move(x), std::move(y), Task::regression);
}

}  // namespace

double FourierTask::truth(RowRef x) const {
  double v = 0;
  for (std::size_t i = 0; i < subsets.size(); ++i) v += coefficients(static_cast<Eigen::Index>(i)) * chi(subsets[i], x);
  return v;
}

std::vector<Subset> FourierTask::interactions() const {
  std::vector<Subset> out;
  for (const auto& s : subsets)
    if (s.size() >= 2) out.push_back(s);
  return out;
}

FourierTask gen_fourier_sparse(const FourierOptions& o) {
  if (o.n < 3) throw Error("need n >= 3 features, got " + std::to_string(o.n));
  if (o.n > 62) throw Error("at most 62 features supported");
  if (o.k < 1) throw Error("sparsity k must be >= 1");
  if (o.sigma < 0) throw Error("noise sigma must be >= 0");
  if (o.n_train < 1 || o.n_test < 0) throw Error("invalid sample counts");
  if (o.min_order > 3) throw Error("min_order must be <= 3");

  std::vector<Subset> pool;
  for (auto& s : enumerate_subsets(o.n, 3))
    if (!s.empty() && static_cast<int>(s.size()) >= o.min_order) pool.push_back(std::move(s));
  if (static_cast<std::size_t>(o.k - 1) > pool.size())
    throw Error("k = " + std::to_string(o.k) + " exceeds the " + std::to_string(pool.size() + 1) + " available subsets of size <= 3");

  FourierTask t;
  t.n = o.n;
  t.k = o.k;
  t.sigma = o.sigma;
  t.seed = o.seed;
  std::mt19937_64 pick(derive_seed(o.seed, kSubsets));
  // partial Fisher-Yates: uniform without replacement
  for (int i = 0; i < o.k - 1; ++i) {
    std::uniform_int_distribution<std::size_t> u(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[u(pick)]);
  }
  t.subsets.push_back({});
  t.subsets.insert(t.subsets.end(), pool.begin(), pool.begin() + (o.k - 1));

  std::mt19937_64 crng(derive_seed(o.seed, kCoefs));
  std::normal_distribution<double> c(0.0, 2.0);
  t.coefficients.resize(o.k);
  for (int i = 0; i < o.k; ++i) t.coefficients(i) = c(crng);

  t.train = sample(t, o.n_train, kTrainX, kTrainNoise);
  t.test = sample(t, o.n_test, kTestX, kTestNoise);
  return t;
}

FourierTask gen_fourier_sparse(int n, int k, double sigma, int n_train, int n_test, std::uint64_t seed) {
  FourierOptions o;
  o.n = n;
  o.k = k;
  o.sigma = sigma;
  o.n_train = n_train;
  o.n_test = n_test;
  o.seed = seed;
  return gen_fourier_sparse(o);
}

std::vector<ScenarioGrid> scenario_a_grids() {
  ScenarioGrid e1{"exp1", "n_train", {}}, e2{"exp2", "sigma", {}}, e3{"exp3", "k", {}};
  for (int n : {20, 50, 100, 200, 300, 500}) e1.cells.push_back({"exp1", 10, 3, 0.5, n, 200});
  for (double s : {0.1, 0.3, 0.5, 1.0, 2.0}) e2.cells.push_back({"exp2", 8, 3, s, 300, 200});
  for (int k : {1, 2, 3}) e3.cells.push_back({"exp3", 15, k, 0.3, 400, 200});
  return {e1, e2, e3};
}

Dataset gen_cluster_classification(int n, int p, int p_inf, std::uint64_t seed) {
  if (n < 2) throw Error("need at least 2 samples");
  if (p_inf < 1 || p < p_inf) throw Error("need 1 <= p_inf <= p, got p = " + std::to_string(p) + ", p_inf = " + std::to_string(p_inf));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;

  // two cluster centers per class in the informative latent space
  Matrix centers(4, p_inf);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers(i) = 2.0 * g(rng);
  Matrix a(p_inf, p_inf);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = g(rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ();

  std::vector<int> label(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) label[static_cast<std::size_t>(i)] = i < n / 2 ? 0 : 1;
  std::shuffle(label.begin(), label.end(), rng);

  Matrix x(n, p);
  Vector y(n);
  int seen[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const int c = label[static_cast<std::size_t>(i)];
    const int cluster = 2 * c + (seen[c]++ % 2);
    Eigen::RowVectorXd z = centers.row(cluster);
    for (int j = 0; j < p_inf; ++j) z(j) += g(rng);
    x.row(i).head(p_inf) = z * q.transpose();
    for (int j = p_inf; j < p; ++j) x(i, j) = g(rng);
    y(i) = c;
  }
  return make_dataset(std::move(x), std::move(y), Task::binary, 2);
}

TreeTask make_tree_task(const Dataset& d, int depth, std::uint64_t seed) {
  if (!is_classification(d.task)) throw Error("tree task needs a classification dataset");
  auto [train, test] = split(d, 0.7, seed);
  TreeTask t;
  t.depth = depth;
  t.seed = seed;
  t.teacher = train_cart(train, depth, 1, seed);
  t.train_original = train.target;
  t.test_original = test.target;
  t.train = train.with_target(predicted_labels(t.teacher.predict(train.features)));
  t.test = test.with_target(predicted_labels(t.teacher.predict(test.features)));
  return t;
}

nlohmann::json to_json(const FourierTask& t) {
  auto rows = [](const Dataset& d) {
    auto x = nlohmann::json::array();
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      std::vector<int> r;
      for (Eigen::Index j = 0; j < d.cols(); ++j) r.push_back(static_cast<int>(d.features(i, j)));
      x.push_back(r);
    }
    return nlohmann::json{{"x", x}, {"y", std::vector<double>(d.target.data(), d.target.data() + d.target.size())}};
  };
  return {{"n", t.n},
          {"k", t.k},
          {"sigma", t.sigma},
          {"seed", t.seed},
          {"subsets", t.subsets},
          {"coefficients", std::vector<double>(t.coefficients.data(), t.coefficients.data() + t.coefficients.size())},
          {"train", rows(t.train)},
          {"test", rows(t.test)}};
}

FourierTask fourier_task_from_json(const nlohmann::json& j) {
  FourierTask t;
  t.n = j.at("n").get<int>();
  t.k = j.at("k").get<int>();
  t.sigma = j.at("sigma").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.subsets = j.at("subsets").get<std::vector<Subset>>();
  auto c = j.at("coefficients").get<std::vector<double>>();
  t.coefficients = Eigen::Map<Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  auto rows = [&](const nlohmann::json& js) {
    const auto& x = js.at("x");
    auto y = js.at("y").get<std::vector<double>>();
    Matrix m(static_cast<Eigen::Index>(x.size()), t.n);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int k = 0; k < t.n; ++k) m(static_cast<Eigen::Index>(i), k) = x[i][static_cast<std::size_t>(k)].get<double>();
    return make_dataset(m, Eigen::Map<Vector>(y.data(), static_cast<Eigen::Index>(y.size())), Task::regression);
  };
  t.train = rows(j.at("train"));
  t.test = rows(j.at("test"));
  return t;
}

}  // namespace tabdistill
