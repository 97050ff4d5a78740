#pragma once

#include <stdexcept>
#include <string>

namespace reg23 {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// pose math
struct NonRigidMatrix : Error { using Error::Error; };
struct GimbalLock : Error { using Error::Error; };

// volume store
struct GeometryOverflow : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct MalformedHeader : Error { using Error::Error; };
struct SizeMismatch : Error { using Error::Error; };
struct IndivisibleDims : Error { using Error::Error; };

// images and metrics
struct DimMismatch : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };

// nn
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteFault : Error { using Error::Error; };

// fine registration
struct EmptyMask : Error { using Error::Error; };
struct ZeroGradient : Error { using Error::Error; };

// evaluation
struct OffDetector : Error { using Error::Error; };

}  // namespace reg23
