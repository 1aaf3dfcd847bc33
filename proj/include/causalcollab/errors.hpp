#pragma once

#include <stdexcept>
#include <string>

namespace causalcollab {

// Failure categories. The CLI maps each one onto a distinct exit code.

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the dataset loader; carries the 1-based line and the offending field.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", field '" + field + "': " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PositivityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProvenanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A counterfactual trajectory reached a fitting routine.
class LeakageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace causalcollab
