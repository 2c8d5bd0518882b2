#pragma once

#include <stdexcept>
#include <string>

namespace fimest {

enum class ErrorCode {
  DuplicatePoints,
  NonFiniteInput,
  LabelMismatch,
  DimensionMismatch,
  DomainError,
  QuadratureFailure,
  RankDeficient,
  ModelFailure,
  SingularNormalEquations,
  NonConvergence,
  ShapeError,
  NumericalFailure,
  SingularWeight,
  SingularCovariance,
  SpawnFailure,
  Timeout,
  ProtocolError,
  ConfigError,
  ParseError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicatePoints: return "DuplicatePoints";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::ModelFailure: return "ModelFailure";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::SingularWeight: return "SingularWeight";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::SpawnFailure: return "SpawnFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// ModelFailure raised while sampling perturbation `job`; keeps the root cause.
class ModelError : public Error {
 public:
  ModelError(std::size_t job, ErrorCode cause, const std::string& what)
      : Error(ErrorCode::ModelFailure,
              "perturbation " + std::to_string(job) + ": " + what),
        job_(job), cause_(cause) {}

  std::size_t job() const noexcept { return job_; }
  ErrorCode cause() const noexcept { return cause_; }

 private:
  std::size_t job_;
  ErrorCode cause_;
};

}  // namespace fimest
