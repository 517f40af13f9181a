#pragma once

#include <stdexcept>
#include <string>

namespace chronolens {

/// Root of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: missing files, schema violations, broken invariants.
/// Messages carry the offending field path where one exists.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Caller passed arguments that violate an operation's precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Anything that went wrong on the far side of a generative backend.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Network / process level failure talking to a backend. Retryable.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The backend answered, but the answer breaks the adapter contract
/// (wrong image size, undecodable payload, missing capability).
class BackendContractViolation : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Descriptor stage produced something that is not a single sentence.
class MalformedDescriptor : public BackendError {
 public:
  MalformedDescriptor(const std::string& what, std::string raw)
      : BackendError(what), raw_response_(std::move(raw)) {}

  const std::string& raw_response() const noexcept { return raw_response_; }

 private:
  std::string raw_response_;
};

}  // namespace chronolens
