#pragma once

#include "tabdistill/learners.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testutil {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("tabdistill_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path path() const { return path_; }
  std::string file(const std::string& name, const std::string& contents) const {
    auto p = path_ / name;
    std::ofstream(p) << contents;
    return p.string();
  }

 private:
  std::filesystem::path path_;
};

/// Predictor defined by a row function; fit only records the task.
class FnPredictor final : public tabdistill::Predictor {
 public:
  using RowFn = std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&)>;
  FnPredictor(int p, RowFn fn, tabdistill::Task task = tabdistill::Task::regression, int classes = 0)
      : p_(p), fn_(std::move(fn)), task_(task), classes_(classes) {}

  void fit(const tabdistill::Dataset&) override {}
  tabdistill::Matrix predict(const tabdistill::Matrix& rows) const override {
    tabdistill::Matrix out(rows.rows(), tabdistill::is_classification(task_) ? classes_ : 1);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out.row(i) = fn_(rows.row(i));
    return out;
  }
  tabdistill::Task task() const override { return task_; }
  int n_classes() const override { return classes_; }
  int n_features() const override { return p_; }
  std::string name() const override { return "fn"; }

 private:
  int p_;
  RowFn fn_;
  tabdistill::Task task_;
  int classes_;
};

inline Eigen::RowVectorXd scalar_row(double v) { return Eigen::RowVectorXd::Constant(1, v); }

}  // namespace testutil
