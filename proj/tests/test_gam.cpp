#include "tabdistill/gam.hpp"

#include <doctest.h>

#include <random>

using namespace tabdistill;

namespace {

Dataset xor_bits(int n, std::uint64_t seed, int p = 4) {
  std::mt19937_64 rng(seed);
  Matrix x(n, p);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = static_cast<double>(rng() & 1U);
    y(i) = x(i, 0) != x(i, 1) ? 1 : 0;
  }
  return make_dataset(x, y, Task::binary, 2);
}

double accuracy(const Matrix& proba, const Vector& y) {
  return (predicted_labels(proba).array() == y.array()).cast<double>().mean();
}

GamTrainConfig quick() {
  GamTrainConfig c;
  c.outer_bags = 2;
  c.max_rounds = 400;
  c.jobs = 1;
  return c;
}

}  // namespace

TEST_CASE("constant regression target leaves only the intercept") {
  Matrix x = Matrix::Random(60, 3);
  auto d = make_dataset(x, Vector::Constant(60, 4.25), Task::regression);
  auto m = fit_gam(d, {{0, 1}}, quick());
  CHECK(m.intercept(0) == doctest::Approx(4.25).epsilon(1e-12));
  for (const auto& t : m.terms) CHECK(t.table.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(m.terms.size() == 4);
}

TEST_CASE("additive sin target reaches test R2 >= 0.95") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> g(0, 0.1);
  auto make = [&](int n) {
    Matrix x(n, 3);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) x(i, j) = u(rng);
      y(i) = std::sin(3 * x(i, 0)) + x(i, 1) + g(rng);
    }
    return make_dataset(x, y, Task::regression);
  };
  auto train = make(3000), test = make(1000);
  GamTrainConfig cfg;
  cfg.jobs = 1;
  auto m = fit_gam(train, {}, cfg);
  Vector pred = predict_gam(m, test.features).col(0);
  const double r2 = 1 - (pred - test.target).squaredNorm() / (test.target.array() - test.target.mean()).square().sum();
  CHECK(r2 >= 0.95);
}

TEST_CASE("XOR needs its interaction term") {
  auto train = xor_bits(800, 2), test = xor_bits(400, 3);
  GamTrainConfig cfg;
  cfg.jobs = 1;
  auto with = fit_gam(train, {{0, 1}}, cfg);
  auto without = fit_gam(train, {}, cfg);
  CHECK(accuracy(predict_gam(with, test.features), test.target) >= 0.99);
  CHECK(accuracy(predict_gam(without, test.features), test.target) <= 0.6);

  // truth table: opposite signs on the diagonal and off-diagonal cells
  auto at = [&](double a, double b) {
    Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(4);
    x(0) = a;
    x(1) = b;
    return term_contribution(with, {0, 1}, x)(0);
  };
  CHECK(at(0, 0) < 0);
  CHECK(at(1, 1) < 0);
  CHECK(at(0, 1) > 0);
  CHECK(at(1, 0) > 0);
  CHECK_THROWS_AS(term_contribution(with, {2, 3}, Eigen::RowVectorXd::Zero(4)), Error);
}

TEST_CASE("decomposition, centering and lookup semantics") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix x(300, 4);
  Vector y(300);
  for (int i = 0; i < 300; ++i) {
    for (int j = 0; j < 4; ++j) x(i, j) = g(rng);
    y(i) = x(i, 0) * x(i, 1) + std::abs(x(i, 2)) + 0.3 * x(i, 1) * x(i, 2) * x(i, 3);
  }
  auto d = make_dataset(x, y, Task::regression);
  auto m = fit_gam(d, {{0, 1}, {1, 2, 3}}, quick());
  REQUIRE(m.terms.size() == 6);
  CHECK(m.term({1, 2, 3}).table.rows() == 512);
  CHECK(m.term({0, 1}).table.rows() == 1024);

  Matrix pre = gam_scores(m, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double sum = m.intercept(0);
    for (const auto& t : m.terms) sum += term_contribution(m, t.features, x.row(i))(0);
    CHECK(std::abs(pre(i, 0) - sum) <= 1e-12);
  }
  for (const auto& t : m.terms) {
    double mean = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) mean += term_contribution(m, t.features, x.row(i))(0);
    CHECK(std::abs(mean / 300) <= 1e-9);
    CHECK(t.table.allFinite());
  }
  // out-of-range values clamp to the edge bins
  Eigen::RowVectorXd far = x.row(0);
  far(2) = 1e9;
  const auto& t2 = m.term({2});
  CHECK(t2.cell(far) == t2.table.rows() - 1);
  CHECK_THROWS_AS(predict_gam(m, Matrix::Zero(2, 3)), Error);
  CHECK((predict_gam(m, x).array() == predict_gam(m, x).array()).all());
}

TEST_CASE("empty-term model and single univariate step function") {
  Matrix x(10, 1);
  Vector y(10);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = i < 5 ? 0 : 1;
    y(i) = i < 5 ? 1 : 3;
  }
  auto d = make_dataset(x, y, Task::regression);
  GamModel empty;
  empty.n_features = 1;
  empty.intercept = Eigen::RowVectorXd::Constant(1, 2.0);
  CHECK((predict_gam(empty, x).array() == 2.0).all());
  GamModel logit = empty;
  logit.link = Link::logit;
  logit.task = Task::binary;
  CHECK(predict_gam(logit, x)(0, 1) == doctest::Approx(1 / (1 + std::exp(-2.0))));

  GamTrainConfig cfg = quick();
  cfg.validation_fraction = 0.2;
  auto m = fit_gam(d, {}, cfg);
  Matrix grid(4, 1);
  grid << -5, 0.2, 0.8, 7;
  Vector p = predict_gam(m, grid).col(0);
  CHECK(p(0) == p(1));
  CHECK(p(2) == p(3));
  CHECK(p(2) > p(1));
}

TEST_CASE("training loss never increases for squared loss") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Matrix x(400, 3);
  Vector y(400);
  for (int i = 0; i < 400; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = g(rng);
    y(i) = x(i, 0) * x(i, 1) + g(rng);
  }
  auto m = fit_gam(make_dataset(x, y, Task::regression), {{0, 1}}, quick());
  REQUIRE(m.logs.size() == 2);
  for (const auto& log : m.logs) {
    REQUIRE(!log.train_loss.empty());
    for (std::size_t r = 1; r < log.train_loss.size(); ++r) CHECK(log.train_loss[r] <= log.train_loss[r - 1] + 1e-12);
    CHECK(log.best_round <= static_cast<int>(log.train_loss.size()));
  }
}

TEST_CASE("multiclass softmax GAM") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 3);
  Matrix x(600, 2);
  Vector y(600);
  for (int i = 0; i < 600; ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
    y(i) = std::floor(x(i, 0));
  }
  auto m = fit_gam(make_dataset(x, y, Task::multiclass, 3), {}, quick());
  CHECK(m.link == Link::softmax);
  CHECK(m.n_scores() == 3);
  Matrix p = predict_gam(m, x);
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1) < 1e-9);
  CHECK(accuracy(p, y) > 0.95);
}

TEST_CASE("fit_gam preconditions") {
  auto d = xor_bits(20, 1);
  CHECK_THROWS_AS(fit_gam(d, {{0}}), Error);
  CHECK_THROWS_AS(fit_gam(d, {{0, 1, 2, 3}}), Error);
  CHECK_THROWS_AS(fit_gam(d, {{0, 9}}), Error);
  CHECK_THROWS_AS(fit_gam(d, {{1, 1}}), Error);
  CHECK_THROWS_AS(fit_gam(d.select({0}), {}), Error);
  GamTrainConfig bad;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(fit_gam(d, {}, bad), Error);
  CHECK(GamTrainConfig{}.outer_bags == 4);
  CHECK(GamTrainConfig{}.max_bins == 256);
  auto m = fit_gam(d, {{1, 0}, {0, 1}}, quick());
  CHECK(m.interactions() == std::vector<Subset>{{0, 1}});
}

namespace {

/// RSS of predicting r by per-cell means of the given cell ids.
double rss_oracle(const Vector& r, const std::vector<int>& cell) {
  std::map<int, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < cell.size(); ++i) {
    acc[cell[i]].first += r(static_cast<Eigen::Index>(i));
    acc[cell[i]].second += 1;
  }
  double rss = 0;
  for (std::size_t i = 0; i < cell.size(); ++i) {
    const auto& [s, c] = acc[cell[i]];
    rss += std::pow(r(static_cast<Eigen::Index>(i)) - s / c, 2);
  }
  return rss;
}

}  // namespace

TEST_CASE("FAST finds the XOR pair and agrees with a brute-force RSS oracle") {
  std::mt19937_64 rng(7);
  const int p = 5;
  Matrix x(500, p);
  Vector y(500);
  for (int i = 0; i < 500; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = static_cast<double>(rng() & 1U);
    y(i) = (x(i, 0) != x(i, 1) ? 1.0 : -1.0) + 0.5 * x(i, 3);
  }
  auto d = make_dataset(x, y, Task::regression);
  auto add = fit_gam(d, {}, quick());
  auto pairs = fast_select_pairs(d, add, 100);
  CHECK(pairs.size() == 10);
  CHECK(pairs[0].pair == Subset{0, 1});

  Vector r = d.target - predict_gam(add, x).col(0);
  for (const auto& sp : pairs) {
    const int a = sp.pair[0], b = sp.pair[1];
    std::vector<int> ca, cb, cab;
    for (int i = 0; i < 500; ++i) {
      ca.push_back(static_cast<int>(x(i, a)));
      cb.push_back(static_cast<int>(x(i, b)));
      cab.push_back(static_cast<int>(x(i, a) * 2 + x(i, b)));
    }
    const double expect = std::min(rss_oracle(r, ca), rss_oracle(r, cb)) - rss_oracle(r, cab);
    CHECK(sp.score == doctest::Approx(std::max(0.0, expect)).epsilon(1e-9).scale(1.0));
  }

  auto zero = make_dataset(x, Vector::Zero(500), Task::regression);
  auto flat = fit_gam(zero, {}, quick());
  auto z = fast_select_pairs(zero, flat, 3);
  REQUIRE(z.size() == 3);
  CHECK(z[0].pair == Subset{0, 1});
  CHECK(z[1].pair == Subset{0, 2});
  CHECK(z[2].pair == Subset{0, 3});
  for (const auto& sp : z) CHECK(sp.score == 0.0);
}

TEST_CASE("FAST on classification residuals") {
  auto d = xor_bits(400, 9, 5);
  auto add = fit_gam(d, {}, quick());
  CHECK(fast_select_pairs(d, add, 1)[0].pair == Subset{0, 1});
}

TEST_CASE("GAM JSON round trip and term CSV") {
  auto d = xor_bits(200, 10);
  auto m = fit_gam(d, {{0, 1}}, quick());
  auto back = gam_from_json(nlohmann::json::parse(to_json(m).dump()));
  CHECK((predict_gam(back, d.features).array() == predict_gam(m, d.features).array()).all());
  const std::string csv = term_csv(m, m.term({0, 1}));
  CHECK(csv.rfind("x0_bin,x0_lo,x0_hi,x1_bin,x1_lo,x1_hi,value\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.find("-inf") != std::string::npos);
}

TEST_CASE("GamPredictor adapter and bag determinism") {
  auto d = xor_bits(300, 11);
  GamPredictor a({{0, 1}}, quick()), b({{0, 1}}, quick());
  a.fit(d);
  b.fit(d);
  CHECK((a.predict(d.features).array() == b.predict(d.features).array()).all());
  GamTrainConfig par = quick();
  par.jobs = 2;
  GamPredictor c({{0, 1}}, par);
  c.fit(d);
  CHECK((a.predict(d.features).array() == c.predict(d.features).array()).all());
  CHECK(a.n_classes() == 2);
}

TEST_CASE("gam config parsing rejects unknown keys") {
  CHECK_THROWS_WITH_AS(gam_config_from_json({{"outer_bag", 2}}), doctest::Contains("outer_bag"), Error);
  CHECK(gam_config_from_json({{"outer_bags", 2}}).outer_bags == 2);
}
