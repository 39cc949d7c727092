#pragma once

#include <stdexcept>
#include <string>

namespace acan {

// Shape/precondition violations on matrix and network operations.
class DimensionError : public std::runtime_error {
public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration values (synth, train, CLI).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// File I/O and parse failures. `line` is 1-based when it refers to a text file,
// 0 when not applicable.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_ = 0;
};

// Raised by the trainer when any loss turns non-finite. Carries the state of
// the offending iteration so the failure is diagnosable.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(const std::string& what, int epoch, int iteration)
      : std::runtime_error(what + " (epoch " + std::to_string(epoch) + ", iteration " +
                           std::to_string(iteration) + ")"),
        epoch_(epoch),
        iteration_(iteration) {}
  int epoch() const { return epoch_; }
  int iteration() const { return iteration_; }

private:
  int epoch_ = 0;
  int iteration_ = 0;
};

}  // namespace acan
