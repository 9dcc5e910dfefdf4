#ifndef FHCI_ERROR_HPP
#define FHCI_ERROR_HPP

#include <stdexcept>
#include <string>

namespace fhci {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// X (or X'V^{-1}X) is numerically singular.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of a formula (e.g. A = 0 where 1/A appears).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An uncertainty measure s_i^2 would be non-positive.
class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

/// The 1-D maximizer failed to converge; carries the last bracket.
class EstimationError : public Error {
 public:
  EstimationError(const std::string& what, double lo, double hi)
      : Error(what), lo_(lo), hi_(hi) {}
  double bracket_lo() const noexcept { return lo_; }
  double bracket_hi() const noexcept { return hi_; }

 private:
  double lo_;
  double hi_;
};

/// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(format(what, row, column)), row_(row), column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t row, std::size_t column) {
    std::string out = what;
    if (row != 0) out += " (row " + std::to_string(row);
    if (column != 0) out += (row != 0 ? ", column " : " (column ") + std::to_string(column);
    if (row != 0 || column != 0) out += ")";
    return out;
  }

  std::size_t row_;
  std::size_t column_;
};

}  // namespace fhci

#endif  // FHCI_ERROR_HPP
