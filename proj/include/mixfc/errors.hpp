#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mixfc {

/// A component or forecast was built from parameters outside its domain.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well-formed but too degenerate for the requested operation
/// (zero-variance sample, all-zero weights, unbracketable quantile).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative numeric routine ran out of budget before meeting tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable file or a submission whose layout (header, field count) is
/// broken, as opposed to bad values inside well-formed rows.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Submission-file error carrying the offending row (1-based, header is row 1),
/// column name and forecast key rendering. Row 0 means "whole forecast".
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, std::string column, std::string key, const std::string& what)
      : std::runtime_error(render(row, column, key, what)),
        row_(row),
        column_(std::move(column)),
        key_(std::move(key)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }
  const std::string& key() const noexcept { return key_; }

 private:
  static std::string render(std::size_t row, const std::string& column, const std::string& key,
                            const std::string& what) {
    std::string out = "row " + std::to_string(row);
    if (!column.empty()) out += ", column '" + column + "'";
    if (!key.empty()) out += ", key [" + key + "]";
    return out + ": " + what;
  }

  std::size_t row_;
  std::string column_;
  std::string key_;
};

}  // namespace mixfc
