#pragma once

#include <stdexcept>
#include <string>

namespace covomix {

// Error taxonomy mirrors the process exit codes: usage = 1, data = 2,
// numeric = 3. Anything else escaping to the boundary is treated as data.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension problems are data errors with a uniform prefix so callers
// can grep diagnostics.
class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string& msg) : DataError("dimension: " + msg) {}
};

}  // namespace covomix
