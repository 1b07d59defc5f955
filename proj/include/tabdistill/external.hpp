#pragma once

#include "tabdistill/learners.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <mutex>
#include <string>

namespace tabdistill {

/// Thrown for any failure talking to an external teacher.
class TeacherError : public Error {
 public:
  using Error::Error;
};

struct ExternalOptions {
  double handshake_timeout = 30.0;  ///< seconds
  double request_timeout = 600.0;   ///< seconds, per fit/predict reply
  int batch_rows = 2048;            ///< rows per predict message
};

/// One newline-delimited JSON stream. Implementations: child process
/// stdio and TCP.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send_line(const std::string& line) = 0;
  /// Returns false on timeout; throws TeacherError on EOF or I/O error.
  virtual bool read_line(std::string& out, double timeout_s) = 0;
  /// Last lines the peer wrote to stderr, if known.
  virtual std::string stderr_tail() const { return {}; }
  virtual std::string describe() const = 0;
};

std::unique_ptr<Channel> spawn_process(const std::string& command);
std::unique_ptr<Channel> connect_tcp(const std::string& host, int port);

/// Predictor forwarding fit/predict over the wire protocol. The endpoint
/// is either a shell command or "tcp://host:port".
class ExternalPredictor final : public Predictor {
 public:
  explicit ExternalPredictor(std::string endpoint, ExternalOptions opts = {});
  ~ExternalPredictor() override;

  void fit(const Dataset& train) override;
  Matrix predict(const Matrix& rows) const override;
  Task task() const override { return task_; }
  int n_classes() const override { return n_classes_; }
  int n_features() const override { return n_features_; }
  std::string name() const override { return "external"; }
  const std::string& endpoint() const { return endpoint_; }

 private:
  void open() const;
  void handshake() const;
  nlohmann::json request(nlohmann::json msg, double timeout) const;
  nlohmann::json exchange(const nlohmann::json& msg, double timeout) const;
  Matrix predict_batch(const Matrix& rows) const;
  [[noreturn]] void fail(const std::string& what) const;

  std::string endpoint_;
  ExternalOptions opts_;
  Task task_ = Task::regression;
  int n_classes_ = 0;
  int n_features_ = 0;
  nlohmann::json fit_msg_;
  mutable std::unique_ptr<Channel> channel_;
  mutable std::mutex mutex_;
  mutable long next_id_ = 1;
  mutable bool fitted_ = false;
};

std::unique_ptr<Predictor> connect_external(const std::string& endpoint, ExternalOptions opts = {});

}  // namespace tabdistill
