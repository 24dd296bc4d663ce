#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace d3 {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or inconsistent inputs (CLI exit status 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A pixel of the output image was not covered by any patch.
class CoverageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Filesystem and format failures (CLI exit status 2).
class IoError : public Error {
 public:
  using Error::Error;
};

enum class ParseErrorKind { malformed_header, truncated_payload, unsupported_format };

class ParseError : public IoError {
 public:
  ParseError(ParseErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

enum class CheckpointErrorKind { bad_magic, version_mismatch, truncated, corrupt };

class CheckpointError : public IoError {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
      : Error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace d3
