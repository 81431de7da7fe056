#pragma once

#include <stdexcept>
#include <string>

namespace harq_aoi {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration file, unknown key or invalid parameter value.
struct ConfigError : Error {
  using Error::Error;
};

/// The average-AoI limit cannot be met by any multiplier the bisection tries.
struct InfeasibleError : Error {
  using Error::Error;
};

/// An iterative solver hit its iteration cap (RVIA, power iteration) or
/// training diverged.
struct ConvergenceError : Error {
  using Error::Error;
};

/// The reachable state space outgrew its configured cap.
struct ResourceError : Error {
  using Error::Error;
};

/// A policy table was queried for a state it does not contain.
struct LookupError : Error {
  using Error::Error;
};

}  // namespace harq_aoi
