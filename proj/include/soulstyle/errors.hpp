#pragma once

#include <stdexcept>
#include <string>

namespace soulstyle {

// Exit codes used by the CLI. Each error category maps to exactly one code.
enum class ExitCode : int {
  ok = 0,
  config = 1,
  io = 2,
  parse = 3,
  backend = 4,
  numeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ExitCode::config, msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ExitCode::io, msg) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(ExitCode::parse, msg) {}
};
struct BackendError : Error {
  explicit BackendError(const std::string& msg) : Error(ExitCode::backend, msg) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(ExitCode::numeric, msg) {}
};
// Bad arguments to a library call (not tied to a CLI path).
struct InvalidInput : Error {
  explicit InvalidInput(const std::string& msg) : Error(ExitCode::config, msg) {}
};

}  // namespace soulstyle
