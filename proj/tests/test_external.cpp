#include "tabdistill/external.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace tabdistill;

namespace {

std::string bridge(const std::string& mode, const std::string& extra = "") {
  return std::string(FAKE_BRIDGE) + " " + mode + (extra.empty() ? "" : " " + extra);
}

Dataset regression_data(int n) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix x(n, 3);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = g(rng);
    y(i) = x(i, 0) * x(i, 1) + 0.5 * x(i, 2);
  }
  return make_dataset(x, y, Task::regression);
}

}  // namespace

TEST_CASE("echo bridge predicts the training mean") {
  auto d = regression_data(50);
  ExternalPredictor t(bridge("echo"));
  t.fit(d);
  Matrix p = t.predict(d.features);
  REQUIRE(p.rows() == 50);
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(p(i, 0) == doctest::Approx(d.target.mean()).epsilon(1e-12));
}

TEST_CASE("echo bridge classification returns class frequencies") {
  Matrix x(4, 1);
  x << 0, 1, 2, 3;
  Vector y(4);
  y << 0, 2, 2, 1;
  ExternalPredictor t(bridge("echo"));
  t.fit(make_dataset(x, y, Task::multiclass, 3));
  Matrix p = t.predict(x);
  CHECK(p.cols() == 3);
  CHECK(p(0, 2) == doctest::Approx(0.5));
}

TEST_CASE("batched predict preserves row order and matches the in-process GBT bit for bit") {
  auto d = regression_data(120);
  ExternalOptions o;
  o.batch_rows = 7;
  ExternalPredictor ext(bridge("gbt"), o);
  ext.fit(d);
  auto local = train_gbt(d, 200, 3, 0.1, 0);
  Matrix a = ext.predict(d.features), b = local->predict(d.features);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("row-order violation is visible through an asymmetric fixture") {
  auto d = regression_data(10);
  ExternalPredictor t(bridge("reverse"));
  t.fit(d);
  Matrix p = t.predict(d.features);
  CHECK(p(0, 0) == d.features(9, 0));
  CHECK(p(0, 0) != d.features(0, 0));
}

TEST_CASE("bridge killed mid-predict names the request and carries stderr") {
  auto d = regression_data(10);
  ExternalPredictor t(bridge("die"));
  t.fit(d);
  try {
    t.predict(d.features);
    FAIL("expected an error");
  } catch (const TeacherError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("request ") != std::string::npos);
    CHECK(msg.find("(predict)") != std::string::npos);
    CHECK(msg.find("dying on predict") != std::string::npos);
  }
}

TEST_CASE("a single transient failure is retried on a fresh connection") {
  testutil::TempDir dir;
  const auto marker = dir.path() / "marker";
  auto d = regression_data(20);
  ExternalPredictor t(bridge("flaky", marker.string()));
  t.fit(d);
  Matrix p = t.predict(d.features);
  CHECK(p(3, 0) == doctest::Approx(d.target.mean()));
}

TEST_CASE("protocol violations and error replies surface as TeacherError") {
  auto d = regression_data(10);
  ExternalPredictor nf(bridge("nonfinite"));
  nf.fit(d);
  CHECK_THROWS_AS(nf.predict(d.features), TeacherError);

  ExternalPredictor err(bridge("error"));
  err.fit(d);
  CHECK_THROWS_WITH_AS(err.predict(d.features), doctest::Contains("model unavailable"), TeacherError);

  CHECK_THROWS_AS(ExternalPredictor(bridge("echo")).predict(d.features), TeacherError);
}

TEST_CASE("handshake timeout") {
  ExternalOptions o;
  o.handshake_timeout = 0.2;
  ExternalPredictor t(bridge("hang"), o);
  CHECK_THROWS_WITH_AS(t.fit(regression_data(5)), doctest::Contains("no reply"), TeacherError);
  CHECK(ExternalOptions{}.handshake_timeout == 30.0);
}

TEST_CASE("missing program and bad tcp endpoint fail cleanly") {
  auto d = regression_data(5);
  CHECK_THROWS_AS(ExternalPredictor("/nonexistent/bridge-binary").fit(d), TeacherError);
  CHECK_THROWS_AS(ExternalPredictor("tcp://127.0.0.1:1").fit(d), TeacherError);
  CHECK_THROWS_AS(ExternalPredictor("tcp://nohostport").fit(d), TeacherError);
}

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <thread>

TEST_CASE("tcp transport speaks the same protocol") {
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(srv >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  REQUIRE(::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  socklen_t len = sizeof addr;
  ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
  REQUIRE(::listen(srv, 1) == 0);
  const int port = ntohs(addr.sin_port);

  std::thread server([srv] {
    const int c = ::accept(srv, nullptr, nullptr);
    std::string buf;
    char chunk[4096];
    double mean = 0;
    for (;;) {
      const auto n = ::read(c, chunk, sizeof chunk);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      bool done = false;
      while ((nl = buf.find('\n')) != std::string::npos) {
        auto msg = nlohmann::json::parse(buf.substr(0, nl));
        buf.erase(0, nl + 1);
        nlohmann::json out{{"id", msg["id"]}};
        const auto cmd = msg["cmd"].get<std::string>();
        if (cmd == "shutdown") {
          done = true;
          break;
        }
        if (cmd == "fit") {
          auto y = msg["y"].get<std::vector<double>>();
          for (double v : y) mean += v / static_cast<double>(y.size());
        }
        if (cmd == "predict")
          out["pred"] = std::vector<double>(msg["X"].size(), mean);
        else
          out["ok"] = true;
        const auto line = out.dump() + "\n";
        REQUIRE(::write(c, line.data(), line.size()) == static_cast<ssize_t>(line.size()));
      }
      if (done) break;
    }
    ::close(c);
  });

  auto d = regression_data(30);
  {
    ExternalPredictor t("tcp://127.0.0.1:" + std::to_string(port));
    t.fit(d);
    Matrix p = t.predict(d.features.topRows(4));
    CHECK(p(2, 0) == doctest::Approx(d.target.mean()));
  }
  server.join();
  ::close(srv);
}
