#pragma once

#include <stdexcept>
#include <string>

namespace photocon {

// Exit codes used by the command-line front end.
enum class ExitCode : int { ok = 0, usage = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(what, ExitCode::usage) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(what, ExitCode::data) {}
};

struct DecodeError : DataError {
  using DataError::DataError;
};

struct FormatError : DataError {
  using DataError::DataError;
};

struct GeometryError : DataError {
  using DataError::DataError;
};

struct SamplingExhausted : DataError {
  SamplingExhausted(const std::string& what, int attempts) : DataError(what), attempts(attempts) {}
  int attempts;
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(what, ExitCode::numeric) {}
};

}  // namespace photocon
