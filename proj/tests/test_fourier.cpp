#include "tabdistill/fourier.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace tabdistill;

namespace {

struct SparseFn {
  std::vector<Subset> subsets;
  std::vector<double> coefs;
  double operator()(const Mask& m) const {
    double v = 0;
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      int ones = 0;
      for (int j : subsets[i]) ones += m[j];
      v += (ones % 2 ? -1.0 : 1.0) * coefs[i];
    }
    return v;
  }
};

SparseFn random_sparse(int p, int k, int max_order, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto all = enumerate_subsets(p, max_order);
  std::shuffle(all.begin(), all.end(), rng);
  std::normal_distribution<double> coef(0.0, 2.0);
  SparseFn f;
  for (int i = 0; i < k; ++i) {
    f.subsets.push_back(all[static_cast<std::size_t>(i)]);
    f.coefs.push_back(coef(rng));
  }
  return f;
}

Vector tabulate(const ValueFn& f, int p) {
  Vector v(1 << p);
  for (int m = 0; m < (1 << p); ++m) v(m) = f(Mask(static_cast<std::uint64_t>(m), p));
  return v;
}

}  // namespace

TEST_CASE("parity examples") {
  CHECK(parity({}, Mask(0b101, 3)) == 1.0);
  CHECK(parity({0, 1}, Mask(0b011, 3)) == 1.0);
  CHECK(parity({0}, Mask(0b01, 2)) == -1.0);
  CHECK_THROWS_AS(parity({4}, Mask(0b01, 2)), Error);
}

TEST_CASE("eval_surrogate matches term-by-term re-summation") {
  FourierSurrogate constant{4, 3, {{}}, Vector::Constant(1, 2.5), {}};
  for (std::uint64_t m = 0; m < 16; ++m) CHECK(eval_surrogate(constant, Mask(m, 4)) == 2.5);
  FourierSurrogate pair{2, 2, {{0, 1}}, Vector::Constant(1, 1.0), {}};
  CHECK(eval_surrogate(pair, Mask(0b11, 2)) == 1.0);
  CHECK_THROWS_AS(eval_surrogate(pair, Mask(0b11, 3)), Error);

  auto f = random_sparse(8, 5, 3, 99);
  FourierSurrogate s{8, 3, f.subsets, Eigen::Map<Vector>(f.coefs.data(), 5), {}};
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    Mask m(rng() & 0xFF, 8);
    CHECK(eval_surrogate(s, m) == f(m));
  }
}

TEST_CASE("brute_force_wht basics, round trip, Parseval and orthonormality") {
  Vector chi01 = tabulate([](const Mask& m) { return parity({0, 1}, m); }, 2);
  Vector c = brute_force_wht(chi01);
  CHECK(c(0b11) == doctest::Approx(1.0));
  CHECK(c(0) == doctest::Approx(0.0));
  CHECK(c(1) == doctest::Approx(0.0));
  CHECK(c(2) == doctest::Approx(0.0));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int p : {1, 5, 12}) {
    Vector v(1 << p);
    for (auto& x : v) x = g(rng);
    Vector coef = brute_force_wht(v);
    CHECK((inverse_wht(coef) - v).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(v.squaredNorm() / v.size() - coef.squaredNorm()) < 1e-9);
  }
  CHECK_THROWS_AS(brute_force_wht(Vector(Vector::Zero(1 << 15))), Error);

  const int p = 6;
  for (std::uint64_t s = 0; s < (1U << p); s += 7)
    for (std::uint64_t t = 0; t < (1U << p); t += 5) {
      if (s == t) continue;
      double sum = 0;
      for (std::uint64_t m = 0; m < (1U << p); ++m) sum += parity_bits(s, m) * parity_bits(t, m);
      CHECK(sum == 0.0);
    }
}

TEST_CASE("fit_surrogate recovers a noiseless 3-sparse function") {
  auto f = random_sparse(10, 3, 3, 2024);
  SurrogateOptions opts;
  opts.p = 10;
  opts.seed = 5;
  auto s = fit_surrogate(ValueFn(f), opts);
  std::set<Subset> want(f.subsets.begin(), f.subsets.end()), got(s.support.begin(), s.support.end());
  CHECK(want == got);
  for (std::size_t i = 0; i < f.subsets.size(); ++i) {
    auto it = std::find(s.support.begin(), s.support.end(), f.subsets[i]);
    REQUIRE(it != s.support.end());
    CHECK(std::abs(s.coefficients(it - s.support.begin()) - f.coefs[i]) < 1e-6);
  }
  CHECK(s.diagnostics.queries <= 500);
  CHECK(s.diagnostics.holdout_r2 > 0.999999);
}

TEST_CASE("fit_surrogate agrees with the exact transform on p = 8") {
  auto f = random_sparse(8, 3, 3, 77);
  SurrogateOptions opts;
  opts.p = 8;
  opts.seed = 9;
  auto s = fit_surrogate(ValueFn(f), opts);
  Vector exact = brute_force_wht(tabulate(f, 8));
  std::set<std::uint64_t> nonzero;
  for (Eigen::Index k = 0; k < exact.size(); ++k)
    if (std::abs(exact(k)) > 1e-9) nonzero.insert(static_cast<std::uint64_t>(k));
  REQUIRE(nonzero.size() == s.support.size());
  for (std::size_t i = 0; i < s.support.size(); ++i) {
    auto bits = subset_bits(s.support[i]);
    CHECK(nonzero.count(bits) == 1);
    CHECK(std::abs(exact(static_cast<Eigen::Index>(bits)) - s.coefficients(static_cast<Eigen::Index>(i))) < 1e-6);
  }
}

TEST_CASE("fit_surrogate constant, noise, determinism and errors") {
  SurrogateOptions opts;
  opts.p = 6;
  auto s = fit_surrogate(ValueFn([](const Mask&) { return 3.25; }), opts);
  REQUIRE(s.support.size() == 1);
  CHECK(s.support[0].empty());
  CHECK(std::abs(s.coefficients(0) - 3.25) < 1e-9);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::map<std::uint64_t, double> noise;
  for (std::uint64_t m = 0; m < 1024; ++m) noise[m] = g(rng);
  opts.p = 10;
  auto noisy = fit_surrogate(ValueFn([&](const Mask& m) { return noise[m.bits()]; }), opts);
  CHECK(std::isfinite(noisy.diagnostics.holdout_r2));
  CHECK(noisy.diagnostics.holdout_r2 < 0.5);
  auto again = fit_surrogate(ValueFn([&](const Mask& m) { return noise[m.bits()]; }), opts);
  CHECK(again.support == noisy.support);
  CHECK(again.coefficients == noisy.coefficients);

  opts.budget = 30;
  CHECK_THROWS_WITH_AS(fit_surrogate(ValueFn([](const Mask&) { return 0.0; }), opts), doctest::Contains("30"), Error);
  opts.budget = 500;
  opts.p = 31;
  CHECK_THROWS_WITH_AS(fit_surrogate(ValueFn([](const Mask&) { return 0.0; }), opts), doctest::Contains("31"), Error);
}

TEST_CASE("draw_masks anchors and distinctness") {
  SurrogateOptions opts;
  opts.p = 10;
  opts.seed = 3;
  auto masks = draw_masks(opts);
  CHECK(masks[0] == Mask::ones(10));
  CHECK(masks[1] == Mask::zeros(10));
  std::set<std::uint64_t> seen;
  for (const auto& m : masks) CHECK(seen.insert(m.bits()).second);
  CHECK(masks.size() <= 500);
}

TEST_CASE("surrogate JSON round trip") {
  FourierSurrogate s{5, 3, {{}, {1, 3}}, Vector::LinSpaced(2, -1.5, 0.25), {0.9, 100, 500}};
  auto back = surrogate_from_json(to_json(s));
  CHECK(back.support == s.support);
  CHECK(back.coefficients == s.coefficients);
  CHECK(back.diagnostics.queries == 100);
}
