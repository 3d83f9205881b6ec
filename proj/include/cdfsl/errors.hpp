#pragma once

#include <stdexcept>
#include <string>

namespace cdfsl {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};
struct LabelError : Error {
  using Error::Error;
};
struct DistributionError : Error {
  using Error::Error;
};
struct ParameterError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct SamplingError : Error {
  using Error::Error;
};
struct EpisodeError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
// A required input artifact (e.g. a teacher checkpoint) is missing.
struct PrerequisiteError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace cdfsl
