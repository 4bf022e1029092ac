#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace exfilt {

// Base for all library errors so callers can catch the whole family at once.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad data shapes, out-of-domain values, malformed files.
struct SchemaError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// File I/O and missing-artifact failures.
struct IoError : Error {
  using Error::Error;
};

// Non-finite parameters or other failures during optimization.
struct TrainingError : Error {
  using Error::Error;
};

// Oracle refused a batch because the query budget cannot cover it.
struct BudgetExhaustedError : Error {
  using Error::Error;
};

// Oracle rejected a batch containing samples outside the schema domain.
struct InvalidQueryError : Error {
  InvalidQueryError(const std::string& msg, std::vector<std::size_t> bad_rows)
      : Error(msg), rows(std::move(bad_rows)) {}
  std::vector<std::size_t> rows;
};

// Network-level failure talking to a remote oracle; distinct from budget errors.
struct TransportError : Error {
  using Error::Error;
};

}  // namespace exfilt
