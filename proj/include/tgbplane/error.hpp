#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tgbplane {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline std::string to_string(ByteView b) {
  return std::string(b.begin(), b.end());
}

// Error kinds surfaced by every module. Normal protocol outcomes (Conflict,
// AlreadyExists, NotYetAvailable) are return values, never exceptions.
enum class Errc {
  kTransientIo,
  kNotFound,
  kRangeOutOfBounds,
  kInvalidKey,
  kShapeMismatch,
  kBadMagic,
  kTruncatedFooter,
  kCorruptFooter,
  kCoordinateOutOfMesh,
  kVersionOverflow,
  kSchemaViolation,
  kStaleSequence,
  kDomainError,
  kLagExceeded,
  kDeadlineExceeded,
  kInvalidTopology,
  kStepReclaimed,
  kWatermarkMissing,
  kUnsupportedRemap,
  kConfigInvalid,
  kInvalidArgument,
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::kTransientIo: return "TransientIo";
    case Errc::kNotFound: return "NotFound";
    case Errc::kRangeOutOfBounds: return "RangeOutOfBounds";
    case Errc::kInvalidKey: return "InvalidKey";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kBadMagic: return "BadMagic";
    case Errc::kTruncatedFooter: return "TruncatedFooter";
    case Errc::kCorruptFooter: return "CorruptFooter";
    case Errc::kCoordinateOutOfMesh: return "CoordinateOutOfMesh";
    case Errc::kVersionOverflow: return "VersionOverflow";
    case Errc::kSchemaViolation: return "SchemaViolation";
    case Errc::kStaleSequence: return "StaleSequence";
    case Errc::kDomainError: return "DomainError";
    case Errc::kLagExceeded: return "LagExceeded";
    case Errc::kDeadlineExceeded: return "DeadlineExceeded";
    case Errc::kInvalidTopology: return "InvalidTopology";
    case Errc::kStepReclaimed: return "StepReclaimed";
    case Errc::kWatermarkMissing: return "WatermarkMissing";
    case Errc::kUnsupportedRemap: return "UnsupportedRemap";
    case Errc::kConfigInvalid: return "ConfigInvalid";
    case Errc::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace tgbplane
