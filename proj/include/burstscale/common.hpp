#ifndef BURSTSCALE_COMMON_HPP_
#define BURSTSCALE_COMMON_HPP_

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <system_error>

namespace burstscale {

/// Bad input: malformed files, violated preconditions, unknown config keys.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A ValidationError tied to a data row of an ingested file (1-based, header excluded).
class RowError : public ValidationError {
 public:
  RowError(std::size_t row, const std::string& what)
      : ValidationError("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Shortest decimal text that parses back to exactly `value`.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

}  // namespace burstscale

#endif  // BURSTSCALE_COMMON_HPP_
