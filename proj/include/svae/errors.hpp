#pragma once

#include <stdexcept>
#include <string>

namespace svae {

// Shape or dimension contract violated by a caller.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad file, bad format, missing path.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf where a finite value is required, or an invalid numeric argument.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace svae
