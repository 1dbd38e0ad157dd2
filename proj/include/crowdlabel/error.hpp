#pragma once

#include <stdexcept>
#include <string>

namespace crowdlabel {

// Base for every error the library throws. `kind` is a short machine-readable
// tag that the CLI copies into its structured error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class IngestError : public Error {
 public:
  explicit IngestError(const std::string& message) : Error("ingest", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error("invalid_argument", message) {}
};

// Computation has no defined result for the given data (no co-present units,
// a single populated table row, ...).
class UndefinedStatistic : public Error {
 public:
  explicit UndefinedStatistic(const std::string& message) : Error("undefined_statistic", message) {}
};

}  // namespace crowdlabel
