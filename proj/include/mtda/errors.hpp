#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mtda {

// Non-finite or out-of-domain model parameter.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An offloaded user was given no server share.
class InfeasibleAllocation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// No decision vector satisfies the constraints of the scenario.
class InfeasibleScenario : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Generation discarded more than 95% of draws.
class DomainMisconfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kVersionMismatch, kCorrupt, kConfigMismatch, kIo };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtda
