#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cbridge {

enum class ErrorCode {
  OutOfDomain,
  TabulationGap,
  InvalidModel,
  EmptyRange,
  BadWindow,
  IndexOut,
  Underflow,
  BadStep,
  ConservationLoss,
  GridTooCoarse,
  NotSorted,
  OracleScale,
  MajorantBreach,
  PinMiss,
  DegenerateVariance,
  ResourceCap,
  Config,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::TabulationGap: return "TabulationGap";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::EmptyRange: return "EmptyRange";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::IndexOut: return "IndexOut";
    case ErrorCode::Underflow: return "Underflow";
    case ErrorCode::BadStep: return "BadStep";
    case ErrorCode::ConservationLoss: return "ConservationLoss";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::NotSorted: return "NotSorted";
    case ErrorCode::OracleScale: return "OracleScale";
    case ErrorCode::MajorantBreach: return "MajorantBreach";
    case ErrorCode::PinMiss: return "PinMiss";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::ResourceCap: return "ResourceCap";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cbridge
