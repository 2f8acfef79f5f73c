#pragma once

#include <stdexcept>
#include <string>

namespace idpp {

// Exit codes used by the CLI. Library code throws the exceptions below;
// the CLI maps them to these codes.
enum class ExitCode : int {
  ok = 0,
  usage = 1,
  validation = 2,
  numerical = 3,
};

// Bad input data: malformed boxes, dimension mismatches, out-of-range
// parameters. Maps to exit code 2.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical-domain failures: indefinite matrices where PSD is required,
// non-finite losses. Maps to exit code 3.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace idpp
