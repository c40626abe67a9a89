#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gcds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class ErrorKind {
  invalid_input,
  contract,
  domain,
  config,
  optimizer,
  diverged,
  io,
  unsupported,
  numeric,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid_input";
    case ErrorKind::contract: return "contract_violation";
    case ErrorKind::domain: return "domain_error";
    case ErrorKind::config: return "config_error";
    case ErrorKind::optimizer: return "optimizer_error";
    case ErrorKind::diverged: return "training_diverged";
    case ErrorKind::io: return "io_error";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::numeric: return "numeric_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the optimizer when a gradient contains NaN/Inf.
class OptimizerError : public Error {
 public:
  OptimizerError(std::uint64_t step, const std::string& what)
      : Error(ErrorKind::optimizer, what), step_(step) {}
  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::uint64_t iteration, const std::string& what)
      : Error(ErrorKind::diverged, what), iteration_(iteration) {}
  std::uint64_t iteration() const noexcept { return iteration_; }

 private:
  std::uint64_t iteration_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

// SplitMix64 finalizer; used to derive independent child seeds so that
// per-replication / per-test-point streams do not depend on worker count.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) {
  return mix_seed(mix_seed(parent) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  // Row-major fill so the stream maps to samples in order.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  return out;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

}  // namespace gcds
