#pragma once

#include <stdexcept>
#include <string>

namespace fortune {

// Exit-code contract: 0 success, 1 usage, 2 data error, 3 numeric failure.
// UsageError is raised for bad flag/config values discovered after argv
// parsing; malformed input files raise DataError; non-finite arithmetic
// raises NumericError.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fortune
