#pragma once

#include <stdexcept>
#include <string>

namespace moebound {

// Failure taxonomy. Anything derived from std::invalid_argument is a caller
// mistake (bad shapes, bad config, bad input files) and maps to CLI exit
// code 1; anything derived from std::runtime_error is a failure of the
// computation itself (training collapse, no convergence, I/O) and maps to 2.

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Value outside the mathematical domain of an operation (non-finite input,
// non-positive matrix entry, probability mass off the simplex).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed on-disk artifact; message carries "path:line" where known.
struct ParseError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LookupError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StorageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Metric requested on data where it is undefined (single class, constant
// ranks). Never silently reported as 0.5 or 0.
struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ComparisonError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace moebound
