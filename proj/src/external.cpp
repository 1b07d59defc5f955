#include "tabdistill/external.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tabdistill {

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TeacherError(std::string("write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

/// Buffered line reader over a file descriptor with a poll timeout.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  bool read_line(std::string& out, double timeout_s) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        out = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return true;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
      if (left <= 0) return false;
      pollfd pfd{fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 1 << 30)));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw TeacherError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) return false;
      char chunk[65536];
      const ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TeacherError(std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw TeacherError("connection closed by teacher");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
};

class ProcessChannel final : public Channel {
 public:
  explicit ProcessChannel(const std::string& command) : command_(command) {
    ignore_sigpipe();
    char tmpl[] = "/tmp/tabdistill-teacher-XXXXXX";
    const int err_fd = ::mkstemp(tmpl);
    if (err_fd < 0) throw TeacherError("cannot create stderr capture file");
    err_path_ = tmpl;
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) throw TeacherError("pipe failed");
    pid_ = ::fork();
    if (pid_ < 0) throw TeacherError("fork failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], 0);
      ::dup2(from_child[1], 1);
      ::dup2(err_fd, 2);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::close(err_fd);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(err_fd);
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_ = to_child[1];
    out_ = from_child[0];
    ::fcntl(in_, F_SETFD, FD_CLOEXEC);
    ::fcntl(out_, F_SETFD, FD_CLOEXEC);
    reader_ = std::make_unique<LineReader>(out_);
  }

  ~ProcessChannel() override {
    if (in_ >= 0) ::close(in_);
    if (out_ >= 0) ::close(out_);
    if (pid_ > 0) {
      // give a well-behaved bridge a moment to exit after stdin closes
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
          pid_ = -1;
          break;
        }
        ::usleep(10000);
      }
      if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
      }
    }
    ::unlink(err_path_.c_str());
  }

  void send_line(const std::string& line) override { write_all(in_, line + "\n"); }
  bool read_line(std::string& out, double timeout_s) override { return reader_->read_line(out, timeout_s); }

  std::string stderr_tail() const override {
    std::ifstream in(err_path_);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    constexpr std::size_t keep = 2000;
    if (text.size() > keep) text = text.substr(text.size() - keep);
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
  }

  std::string describe() const override { return "process `" + command_ + "`"; }

 private:
  std::string command_;
  std::string err_path_;
  pid_t pid_ = -1;
  int in_ = -1, out_ = -1;
  std::unique_ptr<LineReader> reader_;
};

class TcpChannel final : public Channel {
 public:
  TcpChannel(const std::string& host, int port) : where_(host + ":" + std::to_string(port)) {
    ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0)
      throw TeacherError("cannot resolve " + where_);
    for (auto* a = res; a != nullptr; a = a->ai_next) {
      fd_ = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, a->ai_addr, a->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw TeacherError("cannot connect to " + where_);
    reader_ = std::make_unique<LineReader>(fd_);
  }
  ~TcpChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send_line(const std::string& line) override { write_all(fd_, line + "\n"); }
  bool read_line(std::string& out, double timeout_s) override { return reader_->read_line(out, timeout_s); }
  std::string describe() const override { return "tcp " + where_; }

 private:
  std::string where_;
  int fd_ = -1;
  std::unique_ptr<LineReader> reader_;
};

Matrix parse_rows(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const char* field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw TeacherError(std::string("reply field '") + field + "' has " + std::to_string(j.is_array() ? j.size() : 0) +
                       " rows, expected " + std::to_string(rows));
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (cols == 1 && row.is_number()) {
      out(r, 0) = row.get<double>();
      continue;
    }
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw TeacherError(std::string("reply field '") + field + "' row " + std::to_string(r) + " has the wrong width");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw TeacherError(std::string("reply field '") + field + "' holds a non-number");
      out(r, c) = v.get<double>();
    }
  }
  if (!out.allFinite()) throw TeacherError(std::string("reply field '") + field + "' holds non-finite numbers");
  return out;
}

nlohmann::json rows_json(const Matrix& x) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) row[static_cast<std::size_t>(c)] = x(r, c);
    arr.push_back(std::move(row));
  }
  return arr;
}

}  // namespace

std::unique_ptr<Channel> spawn_process(const std::string& command) { return std::make_unique<ProcessChannel>(command); }
std::unique_ptr<Channel> connect_tcp(const std::string& host, int port) { return std::make_unique<TcpChannel>(host, port); }

ExternalPredictor::ExternalPredictor(std::string endpoint, ExternalOptions opts)
    : endpoint_(std::move(endpoint)), opts_(opts) {
  if (endpoint_.empty()) throw TeacherError("empty teacher endpoint");
  if (opts_.batch_rows < 1) throw TeacherError("batch_rows must be >= 1");
}

ExternalPredictor::~ExternalPredictor() {
  if (!channel_) return;
  try {
    channel_->send_line(nlohmann::json{{"id", next_id_++}, {"cmd", "shutdown"}}.dump());
  } catch (...) {
  }
}

void ExternalPredictor::open() const {
  channel_.reset();
  const std::string prefix = "tcp://";
  if (endpoint_.rfind(prefix, 0) == 0) {
    const auto hp = endpoint_.substr(prefix.size());
    const auto colon = hp.rfind(':');
    if (colon == std::string::npos) throw TeacherError("tcp endpoint needs host:port, got " + endpoint_);
    channel_ = connect_tcp(hp.substr(0, colon), std::stoi(hp.substr(colon + 1)));
  } else {
    channel_ = spawn_process(endpoint_);
  }
}

void ExternalPredictor::fail(const std::string& what) const {
  std::string msg = what;
  if (channel_) {
    msg += " [" + channel_->describe() + "]";
    const auto tail = channel_->stderr_tail();
    if (!tail.empty()) msg += "\nteacher stderr:\n" + tail;
  }
  throw TeacherError(msg);
}

nlohmann::json ExternalPredictor::exchange(const nlohmann::json& msg, double timeout) const {
  const long id = msg.at("id").get<long>();
  const std::string cmd = msg.at("cmd").get<std::string>();
  const std::string tag = "request " + std::to_string(id) + " (" + cmd + ")";
  try {
    channel_->send_line(msg.dump());
    std::string line;
    if (!channel_->read_line(line, timeout)) fail(tag + ": no reply within " + std::to_string(timeout) + " s");
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail(tag + ": malformed reply line");
    }
    if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_integer())
      fail(tag + ": reply without an integer id");
    if (reply["id"].get<long>() != id)
      fail(tag + ": reply carries id " + std::to_string(reply["id"].get<long>()));
    if (reply.contains("error")) fail(tag + ": teacher error: " + reply["error"].dump());
    return reply;
  } catch (const TeacherError& e) {
    if (std::string(e.what()).find(tag) == 0) throw;
    fail(tag + ": " + e.what());
  }
}

void ExternalPredictor::handshake() const {
  auto reply = exchange({{"id", next_id_++}, {"cmd", "init"}, {"task", to_string(task_)}, {"n_features", n_features_}},
                        opts_.handshake_timeout);
  if (!reply.value("ok", false)) fail("init was not acknowledged");
}

nlohmann::json ExternalPredictor::request(nlohmann::json msg, double timeout) const {
  for (int attempt = 0;; ++attempt) {
    msg["id"] = next_id_++;
    try {
      if (!channel_) {
        open();
        handshake();
        if (fitted_) {
          auto fit = fit_msg_;
          fit["id"] = next_id_++;
          exchange(fit, opts_.request_timeout);
          msg["id"] = next_id_++;
        }
      }
      return exchange(msg, timeout);
    } catch (const TeacherError&) {
      // a fresh connection (re-initialised and re-fitted) gets one more try
      channel_.reset();
      if (attempt >= 1) throw;
    }
  }
}

void ExternalPredictor::fit(const Dataset& train) {
  std::lock_guard lock(mutex_);
  task_ = train.task;
  n_classes_ = train.n_classes;
  n_features_ = static_cast<int>(train.cols());
  channel_.reset();
  fitted_ = false;
  fit_msg_ = {{"cmd", "fit"},
              {"X", rows_json(train.features)},
              {"y", std::vector<double>(train.target.data(), train.target.data() + train.target.size())}};
  request(fit_msg_, opts_.request_timeout);
  fitted_ = true;
}

Matrix ExternalPredictor::predict_batch(const Matrix& rows) const {
  const auto reply = request({{"cmd", "predict"}, {"X", rows_json(rows)}}, opts_.request_timeout);
  if (is_classification(task_)) {
    if (!reply.contains("proba")) throw TeacherError("predict reply for a classification teacher lacks 'proba'");
    Matrix p = parse_rows(reply["proba"], rows.rows(), n_classes_, "proba");
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      if ((p.row(r).array() < -1e-9).any() || std::abs(p.row(r).sum() - 1.0) > 1e-6)
        throw TeacherError("teacher probabilities in row " + std::to_string(r) + " do not form a distribution");
    return p;
  }
  if (!reply.contains("pred")) throw TeacherError("predict reply for a regression teacher lacks 'pred'");
  return parse_rows(reply["pred"], rows.rows(), 1, "pred");
}

Matrix ExternalPredictor::predict(const Matrix& rows) const {
  std::lock_guard lock(mutex_);
  if (!fitted_) throw TeacherError("external teacher used before fit");
  if (rows.cols() != n_features_)
    throw TeacherError("predict with " + std::to_string(rows.cols()) + " features, teacher was fit on " + std::to_string(n_features_));
  Matrix out(rows.rows(), is_classification(task_) ? n_classes_ : 1);
  for (Eigen::Index start = 0; start < rows.rows(); start += opts_.batch_rows) {
    const Eigen::Index len = std::min<Eigen::Index>(opts_.batch_rows, rows.rows() - start);
    out.middleRows(start, len) = predict_batch(rows.middleRows(start, len));
  }
  return out;
}

std::unique_ptr<Predictor> connect_external(const std::string& endpoint, ExternalOptions opts) {
  return std::make_unique<ExternalPredictor>(endpoint, opts);
}

}  // namespace tabdistill
