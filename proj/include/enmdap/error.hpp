#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace enmdap {

/// Operand shapes are incompatible for the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A class-conditional mean was requested over an empty selection.
class EmptyClassError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A label lies outside [0, n_classes).
class LabelError : public std::out_of_range {
 public:
  LabelError(const std::string& what, std::size_t row)
      : std::out_of_range(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// Malformed dataset or checkpoint file. `line()` is 1-based.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Invalid run configuration; carries the offending key and line (0 if the
/// error is not tied to a single line).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, std::size_t line, const std::string& what)
      : std::runtime_error(format(key, line, what)), key_(key), line_(line) {}
  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& key, std::size_t line,
                            const std::string& what) {
    std::string out = "config";
    if (line > 0) out += " line " + std::to_string(line);
    if (!key.empty()) out += " key '" + key + "'";
    return out + ": " + what;
  }
  std::string key_;
  std::size_t line_;
};

/// Training produced a NaN/Inf loss term.
class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace enmdap
