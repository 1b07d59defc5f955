#include "tabdistill/data.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <map>
#include <random>
#include <set>

using namespace tabdistill;

TEST_CASE("load_csv infers regression and encodes categoricals by frequency") {
  testutil::TempDir dir;
  auto path = dir.file("d.csv", "a,color,y\n1,b,0.5\n2,a,1.25\n3,a,2.75\n4,NA,3.5\n");
  auto d = load_csv(path, "y");
  CHECK(d.task == Task::regression);
  CHECK(d.rows() == 4);
  CHECK(d.cols() == 2);
  REQUIRE(d.columns[1].kind == ColumnKind::categorical);
  CHECK(d.columns[1].categories == std::vector<std::string>{"a", "b"});
  CHECK(d.features(0, 1) == 1.0);
  CHECK(d.features(1, 1) == 0.0);
  CHECK(d.features(3, 1) == 0.0);  // imputed with the mode
}

TEST_CASE("load_csv frequency encoding of a three-row column") {
  testutil::TempDir dir;
  auto d = load_csv(dir.file("d.csv", "c,y\na,1.5\nb,2.5\na,3.5\n"), "y");
  CHECK(d.columns[0].categories == std::vector<std::string>{"a", "b"});
  CHECK(d.features(0, 0) == 0.0);
  CHECK(d.features(1, 0) == 1.0);
}

TEST_CASE("load_csv imputes numeric medians and handles quoting") {
  testutil::TempDir dir;
  auto d = load_csv(dir.file("d.csv", "\"x,1\",y\n1,0\n,1\nnan,0\n5,1\n3,0\n"), "y");
  CHECK(d.columns[0].name == "x,1");
  CHECK(d.task == Task::binary);
  CHECK(d.n_classes == 2);
  CHECK(d.features(1, 0) == doctest::Approx(3.0));
  CHECK(d.features(2, 0) == doctest::Approx(3.0));
}

TEST_CASE("load_csv errors name the offending column") {
  testutil::TempDir dir;
  auto path = dir.file("d.csv", "a,b\n1,2\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "target"), doctest::Contains("target"), Error);
  CHECK_THROWS_AS(load_csv(dir.file("empty.csv", ""), "y"), Error);
  CHECK_THROWS_WITH_AS(load_csv(dir.file("m.csv", "a,z,y\n1,,2\n2,NA,3\n"), "y"), doctest::Contains("z"), Error);
}

TEST_CASE("load_csv task override and multiclass string labels") {
  testutil::TempDir dir;
  auto path = dir.file("d.csv", "x,y\n1,cat\n2,dog\n3,cat\n4,bird\n");
  auto d = load_csv(path, "y");
  CHECK(d.task == Task::multiclass);
  CHECK(d.n_classes == 3);
  CHECK(d.class_labels.front() == "cat");
  auto r = load_csv(dir.file("r.csv", "x,y\n1,1\n2,2\n3,1\n"), "y", Task::regression);
  CHECK(r.task == Task::regression);
}

TEST_CASE("encoding is stable across reloads") {
  testutil::TempDir dir;
  auto path = dir.file("d.csv", "c,y\nx,1.5\ny,2\nz,3\ny,4\nz,5\nz,6\n");
  auto a = load_csv(path, "y"), b = load_csv(path, "y");
  CHECK(a.columns[0].categories == b.columns[0].categories);
  CHECK(a.features == b.features);
}

namespace {
Dataset numbered(int n, Task task) {
  Matrix x(n, 1);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i;
    y(i) = task == Task::regression ? i * 0.5 : (i < n / 2 ? 0 : 1);
  }
  return make_dataset(x, y, task, task == Task::regression ? 0 : 2);
}
}  // namespace

TEST_CASE("split sizes, determinism and stratification") {
  auto d = numbered(9, Task::regression);
  auto [tr, te] = split(d, 2.0 / 3.0, 7);
  CHECK(tr.rows() == 6);
  CHECK(te.rows() == 3);
  auto [tr2, te2] = split(d, 2.0 / 3.0, 7);
  CHECK(tr.features == tr2.features);
  CHECK(te.features == te2.features);
  std::set<double> all;
  for (Eigen::Index i = 0; i < tr.rows(); ++i) all.insert(tr.features(i, 0));
  for (Eigen::Index i = 0; i < te.rows(); ++i) all.insert(te.features(i, 0));
  CHECK(all.size() == 9);

  auto c = numbered(8, Task::binary);
  auto [a, b] = split(c, 0.5, 3);
  CHECK(a.rows() == 4);
  CHECK(a.target.sum() == 2.0);
  CHECK(b.target.sum() == 2.0);

  CHECK_THROWS_AS(split(d, 1.0, 1), Error);
  CHECK_THROWS_AS(split(d, 0.0, 1), Error);
}

TEST_CASE("build_bins distinct values, constants and quantile mass") {
  Matrix x(6, 2);
  x << 1, 4, 2, 4, 3, 4, 1, 4, 2, 4, 3, 4;
  auto d = make_dataset(x, Vector::Zero(6), Task::regression);
  auto bins = build_bins(d, 256);
  CHECK(bins.n_bins(0) == 3);
  CHECK(bins.n_bins(1) == 1);
  CHECK_THROWS_AS(build_bins(d, 1), Error);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  const int n = 10000;
  Matrix big(n, 1);
  for (int i = 0; i < n; ++i) big(i, 0) = u(rng);
  auto db = make_dataset(big, Vector::Zero(n), Task::regression);
  auto spec = build_bins(db, 256);
  REQUIRE(spec.n_bins(0) == 256);
  std::vector<int> counts(256, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(spec.bin(0, big(i, 0)))];
  for (int c : counts) {
    CHECK(c >= 0.8 * n / 256.0);
    CHECK(c <= 1.2 * n / 256.0);
  }
  for (std::size_t k = 1; k < spec.cuts[0].size(); ++k) CHECK(spec.cuts[0][k] > spec.cuts[0][k - 1]);
}

TEST_CASE("every value maps to exactly one bin") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Matrix x(500, 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = j == 2 ? std::round(g(rng)) : g(rng);
  auto d = make_dataset(x, Vector::Zero(500), Task::regression);
  auto spec = build_bins(d, 16);
  for (int j = 0; j < 3; ++j) {
    CHECK(spec.n_bins(j) <= 16);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      int b = spec.bin(j, x(i, j));
      CHECK(b >= 0);
      CHECK(b < spec.n_bins(j));
    }
  }
}

TEST_CASE("baseline vector uses means and modes") {
  Matrix x(3, 3);
  x << 1, 7, 0, 2, 7, 0, 3, 7, 1;
  auto d = make_dataset(x, Vector::Zero(3), Task::regression);
  d.columns[2].kind = ColumnKind::categorical;
  d.columns[2].categories = {"a", "b"};
  auto b = baseline_vector(d);
  CHECK(b(0) == doctest::Approx(2.0));
  CHECK(b(1) == 7.0);
  CHECK(b(2) == 0.0);
}
