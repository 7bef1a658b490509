#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace aegis {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- scenario scripts ------------------------------------------------------

class ParseError : public Error {
 public:
  ParseError(std::string location, std::string reason)
      : Error("parse error at " + location + ": " + reason),
        location_(std::move(location)),
        reason_(std::move(reason)) {}

  const std::string& location() const noexcept { return location_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string location_;
  std::string reason_;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& reason)
      : Error("schema error at " + path + ": " + reason), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class InvalidScript : public Error {
 public:
  using Error::Error;
};

class InvalidPersona : public Error {
 public:
  using Error::Error;
};

// ---- model protocol --------------------------------------------------------

class MalformedResponse : public Error {
 public:
  explicit MalformedResponse(const std::string& reason)
      : Error("malformed response: " + reason) {}
};

class TriggerDomainError : public Error {
 public:
  explicit TriggerDomainError(const std::string& what) : Error("trigger out of domain: " + what) {}
};

// ---- provider --------------------------------------------------------------

class ConfigError : public Error {
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

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// Every parse attempt in a turn produced a malformed reply.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(std::string last_raw)
      : Error("model replies did not follow the response contract"), last_raw_(std::move(last_raw)) {}

  const std::string& last_raw() const noexcept { return last_raw_; }

 private:
  std::string last_raw_;
};

// ---- game core -------------------------------------------------------------

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class WrongPhase : public Error {
 public:
  using Error::Error;
};

class NoSuchDecision : public Error {
 public:
  using Error::Error;
};

class AlreadyDecided : public Error {
 public:
  using Error::Error;
};

class UnknownOption : public Error {
 public:
  using Error::Error;
};

// ---- persistence -----------------------------------------------------------

class UnknownSession : public Error {
 public:
  explicit UnknownSession(const std::string& id) : Error("unknown session: " + id) {}
};

class StorageError : public Error {
 public:
  using Error::Error;
};

class ReplayDivergence : public Error {
 public:
  ReplayDivergence(std::int64_t seq, const std::string& detail)
      : Error("replay diverged at seq " + std::to_string(seq) + ": " + detail), seq_(seq) {}

  std::int64_t seq() const noexcept { return seq_; }

 private:
  std::int64_t seq_;
};

// ---- analysis --------------------------------------------------------------

class NoSessions : public Error {
 public:
  NoSessions() : Error("no sessions to analyze") {}
};

}  // namespace aegis
