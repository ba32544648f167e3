#pragma once

#include <stdexcept>
#include <string>

namespace reasonloop {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A type invariant was violated. `field_path` names the offending field,
// e.g. "rounds[1].conclusion.refinement_instruction".
class ValidationError : public Error {
 public:
  ValidationError(std::string field_path, const std::string& what)
      : Error(field_path + ": " + what), field_path_(std::move(field_path)) {}
  const std::string& field_path() const { return field_path_; }

 private:
  std::string field_path_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Trace parsing failures carry the 1-based line number.
class TraceParseError : public Error {
 public:
  TraceParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class UnsupportedVersionError : public TraceParseError {
 public:
  UnsupportedVersionError(int line, const std::string& version)
      : TraceParseError(line, "unsupported trace version \"" + version + "\""),
        version_(version) {}
  const std::string& version() const { return version_; }

 private:
  std::string version_;
};

// --- Backend transport errors. Each carries the request id that failed. ---

class BackendError : public Error {
 public:
  BackendError(std::string request_id, const std::string& what)
      : Error("[" + request_id + "] " + what),
        request_id_(std::move(request_id)) {}
  const std::string& request_id() const { return request_id_; }

 private:
  std::string request_id_;
};

// Connection failures and timeouts. `attempts` is the total number of tries
// made (1 + retry budget) before giving up.
class TransportError : public BackendError {
 public:
  TransportError(std::string request_id, int attempts, const std::string& what)
      : BackendError(std::move(request_id), what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class HttpStatusError : public BackendError {
 public:
  HttpStatusError(std::string request_id, int status, const std::string& what)
      : BackendError(std::move(request_id),
                     "HTTP " + std::to_string(status) + ": " + what),
        status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class MalformedBodyError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Content-policy refusal from a generator; terminal for the round.
class RefusalError : public BackendError {
 public:
  using BackendError::BackendError;
};

// The model answered but not in the format the protocol requires
// (bad tag markers, unparseable JSON after reprompt, out-of-range scores).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace reasonloop
