#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, sizes or settings that cannot work together.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's stated precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Aggregation weights or contract menus violating their algebraic contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a closed-form expression.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The contract solver produced a menu it cannot certify.
class SolverError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Non-finite loss or parameters during training.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t step)
      : Error(what + " (at SGD step " + std::to_string(step) + ")"), detail_(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }
  /// Same error with `context` prefixed to the message.
  NumericError in_context(const std::string& context) const { return {context + ": " + detail_, step_}; }

 private:
  std::string detail_;
  std::size_t step_;
};

}  // namespace cfl
