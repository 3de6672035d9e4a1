#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mowst {

// Every failure the library reports derives from Error so callers (the CLI in
// particular) can map them to exit codes without catching std::exception.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value lies outside the domain of the operation (non-finite input,
// off-simplex probability row, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// The caller broke an API precondition, e.g. backward() on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Operation on an object in the wrong state (a Var from a cleared tape).
class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace mowst
