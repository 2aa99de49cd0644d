#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uwauth {

/// Invalid parameters or scenario configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, inconsistent or out-of-contract input data. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse failure at a known line of a text file.
class ParseError : public DataError {
 public:
  enum class Kind { kEmpty, kMalformed, kNonFinite, kNonMonotoneTime, kIrregularTime, kDuplicateKey };

  ParseError(Kind kind, std::size_t line, const std::string& what)
      : DataError(what + (line > 0 ? " (line " + std::to_string(line) + ")" : std::string{})),
        kind_(kind),
        line_(line) {}

  Kind kind() const noexcept { return kind_; }
  /// 1-based line number, 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

/// Irregular or misaligned time stream.
class StreamError : public DataError {
 public:
  using DataError::DataError;
};

/// Ill-conditioned or singular numerics. CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace uwauth
