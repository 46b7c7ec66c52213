#pragma once

#include <stdexcept>
#include <string>

namespace faceattack {

// Root of every error raised by the library. The CLI maps the concrete
// subclasses onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on caller-supplied arguments.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Image dimensions disagree with what a model or dataset expects.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class PgmError : public Error {
 public:
  enum class Kind { BadMagic, MissingDimensions, MaxvalTooLarge, TruncatedPayload };

  PgmError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Failures reported by or while talking to a classifier oracle.
class OracleError : public Error {
 public:
  using Error::Error;
};

// The byte stream to a remote oracle could not be opened or broke.
class TransportError : public OracleError {
 public:
  using OracleError::OracleError;
};

// A remote peer sent something that does not follow the wire grammar.
class ProtocolError : public OracleError {
 public:
  ProtocolError(std::string field, const std::string& what)
      : OracleError("protocol violation in field '" + field + "': " + what),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class VersionMismatch : public ProtocolError {
 public:
  explicit VersionMismatch(const std::string& got)
      : ProtocolError("proto", "unsupported protocol version '" + got + "'") {}
};

// A well-formed error response from the remote oracle.
class RemoteError : public OracleError {
 public:
  using OracleError::OracleError;
};

}  // namespace faceattack
