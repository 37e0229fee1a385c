#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace ralm {

// Invalid configuration (ranges, sizes, constants). Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad runtime input: NaN coordinates, mismatched dimensions, malformed files.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A plane carries no positive mass, so no narrow line exists.
class EmptyPlaneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A region or filtered dataset ended up with no samples.
class EmptyDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No rule fires for some input; the rule base does not cover its domain.
class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training gave up (divergence guard tripped). Maps to CLI exit code 3.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InputError(std::string(what) + " is not finite");
}

}  // namespace detail

}  // namespace ralm
