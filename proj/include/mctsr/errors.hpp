#pragma once

#include <stdexcept>
#include <string>

namespace mctsr {

// Base for every error this library raises on purpose. Lookup failures use
// std::out_of_range and out-of-range reward values use std::domain_error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

// Any failure of a model-backed action (draft, critique, rewrite, grade).
class PolicyError : public Error {
 public:
  using Error::Error;
};

// Chat-completion client failures. They are policy errors so that a live
// policy surfaces them unchanged.
class ClientError : public PolicyError {
 public:
  using PolicyError::PolicyError;
};

// Retryable class exhausted: connection failure, HTTP 5xx or 429.
class TransportError : public ClientError {
 public:
  TransportError(const std::string& what, int status = 0)
      : ClientError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

// Non-retryable HTTP 4xx.
class RequestError : public ClientError {
 public:
  RequestError(const std::string& what, int status = 0)
      : ClientError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

// The server answered 2xx but the body is not a usable completion.
class ProtocolError : public ClientError {
 public:
  using ClientError::ClientError;
};

class InitializationError : public Error {
 public:
  using Error::Error;
};

class SelectionError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mctsr
