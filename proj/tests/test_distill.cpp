#include "tabdistill/distill.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace tabdistill;
using testutil::FnPredictor;
using testutil::scalar_row;

namespace {

Dataset bits_data(int n, int p, std::uint64_t seed, const std::function<double(const Eigen::RowVectorXd&)>& f) {
  std::mt19937_64 rng(seed);
  Matrix x(n, p);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = static_cast<double>(rng() & 1U);
    y(i) = f(x.row(i));
  }
  return make_dataset(x, y, Task::regression);
}

double chi(const Eigen::RowVectorXd& x, const Subset& s) {
  int ones = 0;
  for (int j : s) ones += x(j) > 0.5 ? 1 : 0;
  return ones % 2 ? -1.0 : 1.0;
}

/// Walsh coefficients of a tabulated mask function, straight from the sum.
Vector walsh_oracle(int p, const std::function<double(std::uint64_t)>& f) {
  const std::uint64_t n = std::uint64_t{1} << p;
  Vector c = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::uint64_t s = 0; s < n; ++s)
    for (std::uint64_t m = 0; m < n; ++m)
      c(static_cast<Eigen::Index>(s)) += f(m) * (std::popcount(s & m) % 2 ? -1.0 : 1.0) / static_cast<double>(n);
  return c;
}

}  // namespace

TEST_CASE("value function: identity and baseline masking, log-odds") {
  auto d = bits_data(50, 3, 1, [](const auto& x) { return x(0) + 2 * x(1); });
  FnPredictor t(3, [](const Eigen::RowVectorXd& x) { return scalar_row(x(0) + 2 * x(1) - x(2)); });
  const auto ctx = MaskingContext::from_training(d, MaskingPolicy::baseline, 0, 0);
  const double mu = d.target.mean();
  const double sd = std::sqrt((d.target.array() - mu).square().mean());
  Eigen::RowVectorXd x(3);
  x << 1, 0, 1;
  auto v = value_function(t, x, 0, ctx);
  Vector out = v({Mask::ones(3), Mask::zeros(3)});
  CHECK(out(0) == doctest::Approx((0.0 - mu) / sd));
  const Eigen::RowVectorXd b = d.features.colwise().mean();
  CHECK(out(1) == doctest::Approx((b(0) + 2 * b(1) - b(2) - mu) / sd));

  FnPredictor half(3, [](const Eigen::RowVectorXd&) { return Eigen::RowVectorXd::Constant(2, 0.5); }, Task::binary, 2);
  Vector yb = d.target.unaryExpr([](double v) { return v > 1 ? 1.0 : 0.0; });
  auto db = make_dataset(d.features, yb, Task::binary, 2);
  const auto cb = MaskingContext::from_training(db, MaskingPolicy::baseline, 0, 0);
  Vector lo = value_function(half, x, 1, cb)({Mask::ones(3), Mask(5, 3), Mask::zeros(3)});
  CHECK(lo.cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(value_function(half, x, 2, cb), Error);

  FnPredictor sure(3, [](const Eigen::RowVectorXd&) { return Eigen::RowVectorXd{{0.0, 1.0}}; }, Task::binary, 2);
  CHECK(value_function(sure, x, 1, cb)({Mask::ones(3)})(0) == doctest::Approx(std::log((1 - kProbClip) / kProbClip)));
}

TEST_CASE("value function: marginal masking averages over the background rows") {
  auto d = bits_data(40, 3, 2, [](const auto& x) { return x(0) * x(1); });
  FnPredictor t(3, [](const Eigen::RowVectorXd& x) { return scalar_row(x(0) * x(1) + x(2)); });
  const auto ctx = MaskingContext::from_training(d, MaskingPolicy::marginal, 16, 7);
  REQUIRE(ctx.background.rows() == 16);
  Eigen::RowVectorXd x(3);
  x << 1, 1, 0;
  Vector out = value_function(t, x, 0, ctx)({Mask::ones(3), Mask(0b011, 3), Mask::zeros(3)});
  double expect_keep01 = 0, expect_none = 0;
  for (Eigen::Index b = 0; b < 16; ++b) {
    const auto& r = ctx.background.row(b);
    expect_keep01 += ((1.0 + r(2)) - ctx.target_mean) / ctx.target_scale / 16;
    expect_none += ((r(0) * r(1) + r(2)) - ctx.target_mean) / ctx.target_scale / 16;
  }
  CHECK(out(0) == doctest::Approx((1.0 - ctx.target_mean) / ctx.target_scale));
  CHECK(out(1) == doctest::Approx(expect_keep01));
  CHECK(out(2) == doctest::Approx(expect_none));
}

TEST_CASE("explain_sample: XOR teacher puts the pair on top, matching the brute-force transform") {
  const int p = 5;
  FnPredictor t(p, [](const Eigen::RowVectorXd& x) { return scalar_row(chi(x, {0, 1})); });
  // the full cube puts every baseline at exactly 0.5
  Matrix cube(32, p);
  for (int r = 0; r < 32; ++r)
    for (int j = 0; j < p; ++j) cube(r, j) = (r >> j) & 1;
  Vector cy(32);
  for (int r = 0; r < 32; ++r) cy(r) = chi(cube.row(r), {0, 1});
  auto d = make_dataset(cube, cy, Task::regression);
  // both pair bits sit on the far side of the 0.5 baseline
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(p);
  x(0) = 1;
  x(1) = 1;
  DistillConfig cfg;
  for (auto policy : {MaskingPolicy::baseline, MaskingPolicy::marginal}) {
    cfg.masking = policy;
    const auto ctx = MaskingContext::from_training(d, policy, 32, 0);
    auto scores = explain_sample(t, x, chi(x, {0, 1}), ctx, cfg, 11).ranked();
    REQUIRE(!scores.empty());
    CHECK(scores[0].subset == Subset{0, 1});

    // oracle: full Walsh table over all 32 maskings
    auto vf = value_function(t, x, 0, ctx);
    Vector c = walsh_oracle(p, [&](std::uint64_t m) { return vf({Mask(m, p)})(0); });
    std::uint64_t best = 0b11111;
    for (std::uint64_t s = 0; s < 32; ++s)
      if (std::popcount(s) >= 2 && std::abs(c(static_cast<Eigen::Index>(s))) > std::abs(c(static_cast<Eigen::Index>(best)))) best = s;
    CHECK(std::abs(c(0b00011)) > 0.1);
    CHECK(bits_subset(best) == Subset{0, 1});
  }
}

TEST_CASE("explain_sample: additive teacher has no interaction mass") {
  const int p = 8;
  Eigen::RowVectorXd w(p);
  w << 1.5, -2, 0.3, 0, 4, -1, 0.7, 2.2;
  FnPredictor t(p, [w](const Eigen::RowVectorXd& x) { return scalar_row(x.dot(w) + 0.5); });
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Matrix xs(80, p);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs(i) = g(rng);
  Vector ys = xs * w.transpose();
  auto d = make_dataset(xs, ys, Task::regression);
  DistillConfig cfg;
  for (auto policy : {MaskingPolicy::baseline, MaskingPolicy::marginal}) {
    const auto ctx = MaskingContext::from_training(d, policy, 32, 0);
    const Eigen::RowVectorXd x = xs.row(3);
    for (auto kind : all_index_kinds()) {
      cfg.index = kind;
      for (const auto& e : explain_sample(t, x, ys(3), ctx, cfg, 2).entries) CHECK(std::abs(e.score) <= 1e-6);
    }
    auto vf = value_function(t, x, 0, ctx);
    Vector c = walsh_oracle(p, [&](std::uint64_t m) { return vf({Mask(m, p)})(0); });
    for (std::uint64_t s = 0; s < 256; ++s)
      if (std::popcount(s) >= 2) CHECK(std::abs(c(static_cast<Eigen::Index>(s))) <= 1e-9);
  }
}

TEST_CASE("explain_sample is deterministic") {
  FnPredictor t(6, [](const Eigen::RowVectorXd& x) { return scalar_row(chi(x, {1, 2, 4}) + x(0)); });
  auto d = bits_data(50, 6, 4, [](const auto& x) { return x(0); });
  const auto ctx = MaskingContext::from_training(d, MaskingPolicy::marginal, 20, 1);
  DistillConfig cfg;
  auto a = explain_sample(t, d.features.row(0), 0, ctx, cfg, 9), b = explain_sample(t, d.features.row(0), 0, ctx, cfg, 9);
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].subset == b.entries[i].subset);
    CHECK(a.entries[i].score == b.entries[i].score);
  }
}

TEST_CASE("aggregate: counting, mass tie-break, truncation") {
  IndexScores one{IndexKind::fbii, 3, {{{0, 1}, 0.9}, {{2, 3}, 0.1}}};
  auto r = aggregate({one}, 1);
  REQUIRE(r.interactions.size() == 1);
  CHECK(r.interactions[0].subset == Subset{0, 1});
  CHECK(r.interactions[0].count == 1);
  CHECK(r.interactions[0].mass == doctest::Approx(0.9));

  IndexScores two{IndexKind::fbii, 3, {{{0, 1}, -0.5}, {{1, 2}, 0.2}}};
  r = aggregate({one, two}, 1);
  CHECK(r.interactions[0].count == 2);
  CHECK(r.interactions[0].mass == doctest::Approx(1.4));

  IndexScores a{IndexKind::fbii, 3, {{{3, 4}, 0.2}}}, b{IndexKind::fbii, 3, {{{1, 2}, 0.7}}};
  r = aggregate({a, b}, 5);
  CHECK(r.interactions[0].subset == Subset{1, 2});
  CHECK(r.interactions[1].subset == Subset{3, 4});
  CHECK(r.truncated(10).interactions.size() == 2);
  CHECK(aggregate({}, 3).interactions.empty());
  CHECK_THROWS_AS(aggregate({one}, 0), Error);

  // monotone: adding a sample never lowers a count
  std::mt19937_64 rng(8);
  std::vector<IndexScores> samples;
  std::map<Subset, int> last;
  for (int i = 0; i < 30; ++i) {
    IndexScores s{IndexKind::fbii, 3, {}};
    for (int e = 0; e < 6; ++e) s.entries.push_back({canonical({static_cast<int>(rng() % 5), static_cast<int>(rng() % 5) + 5}), static_cast<double>(rng() % 100) / 10});
    samples.push_back(s);
    auto agg = aggregate(samples, 3);
    std::map<Subset, int> now;
    for (const auto& e : agg.interactions) now[e.subset] = e.count;
    for (const auto& [k, c] : last) CHECK(now[k] >= c);
    last = now;
  }
}

TEST_CASE("distill: short lists, single sample, determinism, scaling, budget, jobs") {
  const int p = 6;
  auto f = [](const Eigen::RowVectorXd& x) { return 2 * chi(x, {0, 1}) + chi(x, {2, 3, 4}) + 0.5 * x(5); };
  auto d = bits_data(120, p, 12, f);
  FnPredictor t(p, [&](const Eigen::RowVectorXd& x) { return scalar_row(f(x)); });
  FnPredictor scaled(p, [&](const Eigen::RowVectorXd& x) { return scalar_row(7.5 * f(x)); });
  DistillConfig cfg;
  cfg.n_explain = 20;
  cfg.n_interactions = 50;
  cfg.seed = 3;
  cfg.jobs = 1;
  auto r = distill(d, t, cfg);
  CHECK(r.interactions.size() < 50);
  CHECK(r.interactions[0].subset == Subset{0, 1});
  CHECK(r.interactions[1].subset == Subset{2, 3, 4});
  CHECK(r.diagnostics.size() == 20);
  long queries = 0;
  for (const auto& dg : r.diagnostics) {
    CHECK(dg.queries <= cfg.budget);
    queries += dg.queries;
  }
  CHECK(queries <= 20L * cfg.budget);

  auto again = distill(d, t, cfg);
  CHECK(again.subsets() == r.subsets());
  CHECK(again.teacher_digest == r.teacher_digest);
  CHECK(distill(d, scaled, cfg).subsets() == r.subsets());
  cfg.jobs = 3;
  CHECK(distill(d, t, cfg).subsets() == r.subsets());

  cfg.n_explain = 1;
  cfg.per_sample_top = 2;
  auto single = distill(d, t, cfg);
  const auto row = explained_rows(d.rows(), 1, derive_seed(cfg.seed, 0x5A))[0];
  const auto ctx = MaskingContext::from_training(d, cfg.masking, cfg.background_size, cfg.seed);
  auto top = explain_sample(t, d.features.row(row), d.target(row), ctx, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(row) + 1)).ranked();
  REQUIRE(single.interactions.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(single.interactions[i].count == 1);
    CHECK(single.interactions[i].subset == top[i].subset);
  }
}

TEST_CASE("distill_multi shares surrogates and matches single-kind runs") {
  const int p = 6;
  auto f = [](const Eigen::RowVectorXd& x) { return chi(x, {0, 3}) + 0.4 * chi(x, {1, 2, 5}); };
  auto d = bits_data(80, p, 13, f);
  FnPredictor t(p, [&](const Eigen::RowVectorXd& x) { return scalar_row(f(x)); });
  DistillConfig cfg;
  cfg.n_explain = 10;
  cfg.jobs = 1;
  auto all = distill_multi(d, t, cfg, all_index_kinds());
  CHECK(all.size() == 7);
  for (auto kind : all_index_kinds()) {
    cfg.index = kind;
    CHECK(distill(d, t, cfg).subsets() == all.at(kind).subsets());
    CHECK(!all.at(kind).interactions.empty());
  }
  auto j = to_json(all.at(IndexKind::fbii), d, cfg);
  CHECK(j["interactions"][0]["indices"].is_array());
  CHECK(j["interactions"][0]["features"][0] == "x0");
  CHECK(j["provenance"]["teacher_digest"].get<std::string>().size() == 16);
}

TEST_CASE("config validation and JSON") {
  DistillConfig c;
  CHECK(c.max_order == 3);
  CHECK(c.budget == 500);
  CHECK(c.per_sample_top == 5);
  c.max_order = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.budget = 49;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.index = IndexKind::stii;
  c.masking = MaskingPolicy::baseline;
  auto back = distill_config_from_json(to_json(c));
  CHECK(back.index == IndexKind::stii);
  CHECK(back.masking == MaskingPolicy::baseline);
  CHECK_THROWS_AS(masking_from_string("zero"), Error);
}

TEST_CASE("GBT teacher on chi_{01} + chi_{234}: both subsets in the top 3 for >= 16 of 20 seeds") {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto d = bits_data(400, 10, seed, [](const auto& x) { return chi(x, {0, 1}) + chi(x, {2, 3, 4}); });
    auto teacher = train_gbt(d, 200, 3, 0.1, seed);
    DistillConfig cfg;
    cfg.seed = seed;
    cfg.n_interactions = 3;
    const auto top = distill(d, *teacher, cfg).subsets();
    const bool pair = std::find(top.begin(), top.end(), Subset{0, 1}) != top.end();
    const bool triple = std::find(top.begin(), top.end(), Subset{2, 3, 4}) != top.end();
    hits += pair && triple ? 1 : 0;
  }
  CHECK(hits >= 16);
}

TEST_CASE("distill config parsing rejects unknown keys") {
  CHECK_THROWS_WITH_AS(distill_config_from_json({{"budjet", 100}}), doctest::Contains("budjet"), Error);
  CHECK(distill_config_from_json({{"budget", 100}, {"jobs", 2}}).budget == 100);
}
