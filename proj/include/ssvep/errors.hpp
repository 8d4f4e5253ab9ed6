#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ssvep {

/// Base error carrying a stable machine-readable code and the CLI exit
/// code class it maps to (2 config, 3 data, 4 numerical).
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message, int exit_code)
      : std::runtime_error(code + ": " + message),
        code_(std::move(code)),
        exit_code_(exit_code) {}

  const std::string& code() const noexcept { return code_; }
  int exit_code() const noexcept { return exit_code_; }

private:
  std::string code_;
  int exit_code_;
};

struct ConfigError : Error {
  ConfigError(std::string code, const std::string& message)
      : Error(std::move(code), message, 2) {}
};

struct DataError : Error {
  DataError(std::string code, const std::string& message)
      : Error(std::move(code), message, 3) {}
};

struct NumericError : Error {
  NumericError(std::string code, const std::string& message)
      : Error(std::move(code), message, 4) {}
};

}  // namespace ssvep
