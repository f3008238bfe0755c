#pragma once

#include <stdexcept>
#include <string>

namespace mhdtc {

// All library failures derive from Error so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated preconditions: bad geometry, wrong shapes, out-of-range parameters.
struct InvalidArgument : Error {
  using Error::Error;
};

// Solver breakdown, non-finite values, empty retained spectra.
struct NumericalError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace mhdtc
