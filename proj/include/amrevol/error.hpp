#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace amrevol {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

/// Non-retryable rejection by the server (4xx other than auth / rate limit).
class RequestInvalid : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class MissingSlot : public Error {
 public:
  explicit MissingSlot(std::string slot)
      : Error("missing prompt slot: " + slot), slot_(std::move(slot)) {}
  const std::string& slot() const noexcept { return slot_; }

 private:
  std::string slot_;
};

class UnknownTemplate : public Error {
 public:
  using Error::Error;
};

class ParseFailure : public Error {
 public:
  using Error::Error;
};

class EmptyText : public Error {
 public:
  EmptyText() : Error("cannot embed empty text") {}
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
              std::to_string(actual)) {}
};

class ZeroVector : public Error {
 public:
  ZeroVector() : Error("cosine similarity of a zero vector") {}
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class CorruptRecord : public Error {
 public:
  CorruptRecord(std::size_t line, const std::string& what)
      : Error("corrupt record at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// The sandbox could not run anything at all (interpreter or driver missing).
class SetupError : public Error {
 public:
  using Error::Error;
};

}  // namespace amrevol
