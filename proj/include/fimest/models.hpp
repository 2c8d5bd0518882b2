#pragma once

// Generative models: anything that maps (theta, n, seed) to n draws in R^K.

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <pthread.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <Eigen/Dense>

#include "fimest/emst.hpp"
#include "fimest/error.hpp"
#include "fimest/random.hpp"

extern char** environ;

namespace fimest {

/// Sampling contract. Identical (theta, n, seed) must give bit-identical
/// output; rows are i.i.d. draws from p_theta. Implementations must be safe
/// to call from several threads at once.
class GenerativeModel {
 public:
  virtual ~GenerativeModel() = default;

  virtual std::size_t param_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual RowMatrix sample(std::span<const double> theta, std::size_t n, std::uint64_t seed) const = 0;
};

/// N(theta, sigma^2 I) with theta in R^K. Draw (i, j) is normal number
/// i * K + j of stream 0 for `seed`.
class GaussianMeanModel final : public GenerativeModel {
 public:
  explicit GaussianMeanModel(std::size_t dim, double sigma = 1.0) : dim_(dim), sigma_(sigma) {
    if (dim == 0) throw Error(ErrorCode::DomainError, "gaussian model needs dim >= 1");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::DomainError, "sigma must be positive");
  }

  std::size_t param_dim() const override { return dim_; }
  std::size_t output_dim() const override { return dim_; }
  double sigma() const { return sigma_; }

  RowMatrix sample(std::span<const double> theta, std::size_t n, std::uint64_t seed) const override {
    if (theta.size() != dim_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "theta has " + std::to_string(theta.size()) + " entries, model expects " + std::to_string(dim_));
    }
    RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim_));
    CounterStream stream(seed, 0);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        out(i, j) = theta[static_cast<std::size_t>(j)] + sigma_ * stream.normal();
      }
    }
    return out;
  }

  /// Closed form: sigma^-2 I.
  Eigen::MatrixXd true_fim() const {
    return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_)) /
           (sigma_ * sigma_);
  }

 private:
  std::size_t dim_;
  double sigma_;
};

/// Request line sent to an external sampler: {"theta":[...],"n":N,"seed":S}\n
/// Floats use the shortest representation that round-trips.
inline std::string external_request_line(std::span<const double> theta, std::size_t n, std::uint64_t seed) {
  std::string line = "{\"theta\":[";
  char buf[64];
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(theta[i])) throw Error(ErrorCode::NonFiniteInput, "theta must be finite");
    if (i > 0) line += ',';
    const auto res = std::to_chars(buf, buf + sizeof(buf), theta[i]);
    line.append(buf, res.ptr);
  }
  line += "],\"n\":" + std::to_string(n) + ",\"seed\":" + std::to_string(seed) + "}\n";
  return line;
}

/// Parse exactly n lines of k comma-separated decimals. A single trailing
/// newline is allowed; anything else is a ProtocolError.
inline RowMatrix parse_external_response(std::string_view text, std::size_t n, std::size_t k) {
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (row == n) {
      throw Error(ErrorCode::ProtocolError, "more than " + std::to_string(n) + " rows in response");
    }
    std::size_t col = 0;
    std::size_t cpos = 0;
    while (true) {
      std::size_t cend = line.find(',', cpos);
      if (cend == std::string_view::npos) cend = line.size();
      std::string_view field = line.substr(cpos, cend - cpos);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double v = 0.0;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        throw Error(ErrorCode::ProtocolError, "row " + std::to_string(row + 1) + ": non-numeric field '" +
                                                  std::string(field) + "'");
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::ProtocolError, "row " + std::to_string(row + 1) + ": non-finite value");
      }
      if (col == k) {
        throw Error(ErrorCode::ProtocolError, "row " + std::to_string(row + 1) + ": more than " +
                                                  std::to_string(k) + " columns");
      }
      out(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col++)) = v;
      if (cend == line.size()) break;
      cpos = cend + 1;
    }
    if (col != k) {
      throw Error(ErrorCode::ProtocolError, "row " + std::to_string(row + 1) + ": " + std::to_string(col) +
                                                " columns, expected " + std::to_string(k));
    }
    ++row;
    pos = end + 1;
  }
  if (row != n) {
    throw Error(ErrorCode::ProtocolError, "short read: " + std::to_string(row) + " of " + std::to_string(n) + " rows");
  }
  return out;
}

namespace detail {

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw Error(ErrorCode::SpawnFailure, std::strerror(errno));
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;
  void close_read() {
    if (fd[0] >= 0) ::close(fd[0]);
    fd[0] = -1;
  }
  void close_write() {
    if (fd[1] >= 0) ::close(fd[1]);
    fd[1] = -1;
  }
};

struct ProcessResult {
  std::string out;
  std::string err;
  int status = 0;
};

// Writes without raising SIGPIPE if the child has already gone away.
inline void write_all_quiet(int fd, std::string_view data) {
  sigset_t pipe_set;
  sigset_t old_set;
  sigemptyset(&pipe_set);
  sigaddset(&pipe_set, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &pipe_set, &old_set);
  bool broken = false;
  while (!data.empty()) {
    const ssize_t w = ::write(fd, data.data(), data.size());
    if (w < 0) {
      if (errno == EINTR) continue;
      broken = (errno == EPIPE);
      break;
    }
    data.remove_prefix(static_cast<std::size_t>(w));
  }
  if (broken) {
    const timespec zero{0, 0};
    sigtimedwait(&pipe_set, nullptr, &zero);
  }
  pthread_sigmask(SIG_SETMASK, &old_set, nullptr);
}

inline ProcessResult run_process(const std::vector<std::string>& argv, std::string_view input, double timeout_s) {
  if (argv.empty()) throw Error(ErrorCode::SpawnFailure, "empty command");
  Pipe in;
  Pipe out;
  Pipe err;

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in.fd[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out.fd[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err.fd[1], STDERR_FILENO);

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw Error(ErrorCode::SpawnFailure, "cannot run '" + argv[0] + "': " + std::strerror(rc));

  in.close_read();
  out.close_write();
  err.close_write();
  write_all_quiet(in.fd[1], input);
  in.close_write();

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  pollfd fds[2] = {{out.fd[0], POLLIN, 0}, {err.fd[0], POLLIN, 0}};
  std::string* sinks[2] = {&result.out, &result.err};
  int open_streams = 2;
  char buf[65536];
  while (open_streams > 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw Error(ErrorCode::Timeout, "'" + argv[0] + "' exceeded " + std::to_string(timeout_s) +
                                          " s; stderr: " + result.err);
    }
    const int ready = ::poll(fds, 2, static_cast<int>(left.count()));
    if (ready < 0) {
      if (errno == EINTR) continue;
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      throw Error(ErrorCode::SpawnFailure, std::string("poll: ") + std::strerror(errno));
    }
    for (int s = 0; s < 2; ++s) {
      if (fds[s].fd < 0 || fds[s].revents == 0) continue;
      const ssize_t r = ::read(fds[s].fd, buf, sizeof(buf));
      if (r > 0) {
        sinks[s]->append(buf, static_cast<std::size_t>(r));
      } else if (r == 0 || errno != EINTR) {
        fds[s].fd = -1;
        --open_streams;
      }
    }
  }
  while (::waitpid(pid, &result.status, 0) < 0 && errno == EINTR) {
  }
  return result;
}

}  // namespace detail

/// Black-box sampler in a child process. Each call spawns the command, writes
/// one request line to its stdin and reads n CSV rows of K values from its
/// stdout. Calls share no state, so concurrent use is safe.
class ExternalModel final : public GenerativeModel {
 public:
  ExternalModel(std::vector<std::string> command, std::size_t param_dim, std::size_t output_dim,
                double timeout_s = 60.0)
      : command_(std::move(command)), param_dim_(param_dim), output_dim_(output_dim), timeout_s_(timeout_s) {
    if (command_.empty()) throw Error(ErrorCode::SpawnFailure, "external model needs a command");
    if (param_dim_ == 0 || output_dim_ == 0) throw Error(ErrorCode::DomainError, "dimensions must be positive");
    if (!(timeout_s_ > 0.0)) throw Error(ErrorCode::DomainError, "timeout must be positive");
  }

  std::size_t param_dim() const override { return param_dim_; }
  std::size_t output_dim() const override { return output_dim_; }
  const std::vector<std::string>& command() const { return command_; }

  RowMatrix sample(std::span<const double> theta, std::size_t n, std::uint64_t seed) const override {
    if (theta.size() != param_dim_) {
      throw Error(ErrorCode::DimensionMismatch, "theta has " + std::to_string(theta.size()) +
                                                    " entries, model expects " + std::to_string(param_dim_));
    }
    const auto result = detail::run_process(command_, external_request_line(theta, n, seed), timeout_s_);
    if (!WIFEXITED(result.status) || WEXITSTATUS(result.status) != 0) {
      const std::string how = WIFEXITED(result.status) ? "exited with status " + std::to_string(WEXITSTATUS(result.status))
                                                       : "was killed by a signal";
      throw Error(ErrorCode::ProtocolError, "'" + command_[0] + "' " + how + "; stderr: " + result.err);
    }
    try {
      return parse_external_response(result.out, n, output_dim_);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + "; stderr: " + result.err);
    }
  }

 private:
  std::vector<std::string> command_;
  std::size_t param_dim_;
  std::size_t output_dim_;
  double timeout_s_;
};

/// Benchmark FIM for a Gaussian family: inverse of the unbiased sample
/// covariance of x (rows are observations).
inline Eigen::MatrixXd sample_fim_oracle(const RowMatrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  if (n <= k) {
    throw Error(ErrorCode::SingularCovariance,
                std::to_string(n) + " samples cannot give a full-rank " + std::to_string(k) + "-d covariance");
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw Error(ErrorCode::SingularCovariance, "sample covariance condition estimate exceeds 1e12");
  }
  return eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace fimest
