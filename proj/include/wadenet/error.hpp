#pragma once

#include <stdexcept>

namespace wadenet {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (bad config file, checkpoint/config
// mismatch, parameter out of its documented range).
struct ConfigError : Error {
  using Error::Error;
};

// Problems with input data: missing files, malformed WAV / manifest /
// checkpoint payloads, empty splits.
struct DataError : Error {
  using Error::Error;
};

// Tensor dimension or signal length violations.
struct ShapeError : Error {
  using Error::Error;
};

// API contract violations: non-scalar loss, missing gradients, tape misuse.
struct ContractError : Error {
  using Error::Error;
};

}  // namespace wadenet
