// Minimal wire-protocol teacher used by the tests.
//   fake_bridge <mode> [marker-file]
// modes: echo, gbt, reverse, die, nonfinite, hang, flaky, error
#include "tabdistill/learners.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

using namespace tabdistill;
using nlohmann::json;

namespace {

Matrix to_matrix(const json& x, int p) {
  Matrix m(static_cast<Eigen::Index>(x.size()), p);
  for (std::size_t r = 0; r < x.size(); ++r)
    for (int c = 0; c < p; ++c) m(static_cast<Eigen::Index>(r), c) = x[r][static_cast<std::size_t>(c)].get<double>();
  return m;
}

void reply(const json& j) { std::cout << j.dump() << '\n' << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "echo";
  const std::string marker = argc > 2 ? argv[2] : "";
  Task task = Task::regression;
  int p = 0, classes = 0;
  Vector level;  // echo: mean target or class frequencies
  std::unique_ptr<Predictor> model;

  std::string line;
  while (std::getline(std::cin, line)) {
    json msg;
    try {
      msg = json::parse(line);
    } catch (...) {
      reply({{"id", -1}, {"error", "malformed message"}});
      continue;
    }
    const auto id = msg.value("id", -1L);
    const auto cmd = msg.value("cmd", std::string());
    if (mode == "hang") std::this_thread::sleep_for(std::chrono::hours(1));
    if (cmd == "init") {
      task = task_from_string(msg.at("task").get<std::string>());
      p = msg.at("n_features").get<int>();
      reply({{"id", id}, {"ok", true}, {"v", 1}});
    } else if (cmd == "fit") {
      Matrix x = to_matrix(msg.at("X"), p);
      auto yv = msg.at("y").get<std::vector<double>>();
      Vector y = Eigen::Map<Vector>(yv.data(), static_cast<Eigen::Index>(yv.size()));
      classes = is_classification(task) ? static_cast<int>(y.maxCoeff()) + 1 : 0;
      if (task == Task::binary) classes = 2;
      auto d = make_dataset(x, y, task, classes);
      if (is_classification(task)) {
        level = Vector::Zero(classes);
        for (double v : yv) level(static_cast<int>(v)) += 1.0 / static_cast<double>(yv.size());
      } else {
        level = Vector::Constant(1, y.mean());
      }
      if (mode == "gbt") model = train_gbt(d, 200, 3, 0.1, 0);
      reply({{"id", id}, {"ok", true}});
    } else if (cmd == "predict") {
      if (mode == "die") {
        std::cerr << "fake bridge: dying on predict " << id << std::endl;
        return 1;
      }
      if (mode == "flaky" && !marker.empty() && !std::ifstream(marker)) {
        std::ofstream(marker) << "1";
        std::cerr << "fake bridge: transient failure" << std::endl;
        return 1;
      }
      if (mode == "error") {
        reply({{"id", id}, {"error", "model unavailable"}});
        continue;
      }
      Matrix x = to_matrix(msg.at("X"), p);
      Matrix out;
      if (model) {
        out = model->predict(x);
      } else {
        out = level.transpose().replicate(x.rows(), 1);
        // reverse: row-dependent output emitted in reverse order
        if (mode == "reverse") {
          out.col(0) = x.col(0);
          out = out.colwise().reverse().eval();
        }
      }
      if (mode == "nonfinite") {
        std::cout << "{\"id\":" << id << ",\"pred\":[NaN]}\n" << std::flush;
        continue;
      }
      json rows = json::array();
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        if (is_classification(task)) {
          std::vector<double> row(static_cast<std::size_t>(out.cols()));
          for (Eigen::Index c = 0; c < out.cols(); ++c) row[static_cast<std::size_t>(c)] = out(r, c);
          rows.push_back(row);
        } else {
          rows.push_back(out(r, 0));
        }
      }
      reply({{"id", id}, {is_classification(task) ? "proba" : "pred", rows}});
    } else if (cmd == "shutdown") {
      return 0;
    } else {
      reply({{"id", id}, {"error", "unknown command " + cmd}});
    }
  }
  return 0;
}
