#pragma once

#include <stdexcept>
#include <string>

namespace raycal {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Camera / geometry
struct DegenerateRotation : Error {
  explicit DegenerateRotation(const std::string& msg) : Error(msg) {}
};
struct InvalidCamera : Error {
  explicit InvalidCamera(const std::string& msg) : Error(msg) {}
};
struct BehindCamera : Error {
  explicit BehindCamera(const std::string& msg) : Error(msg) {}
};
struct NonConvergent : Error {
  explicit NonConvergent(const std::string& msg) : Error(msg) {}
};
struct OutOfBounds : Error {
  explicit OutOfBounds(const std::string& msg) : Error(msg) {}
};

// Numerics
struct NonFinite : Error {
  explicit NonFinite(const std::string& msg) : Error(msg) {}
};

// Metrics / IO
struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};
struct CountMismatch : Error {
  explicit CountMismatch(const std::string& msg) : Error(msg) {}
};
struct TooSmall : Error {
  explicit TooSmall(const std::string& msg) : Error(msg) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Synthetic data generation
struct InsufficientGeometry : Error {
  explicit InsufficientGeometry(const std::string& msg) : Error(msg) {}
};

}  // namespace raycal
