#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gpnav {

enum class ErrorCode {
  NonFiniteAction,
  ActionArity,
  InvalidEndpoint,
  Unreachable,
  EmptyPath,
  NumericalDivergence,
  Overconstrained,
  Config,
  Io,
};

constexpr std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonFiniteAction: return "NonFiniteAction";
    case ErrorCode::ActionArity: return "ActionArity";
    case ErrorCode::InvalidEndpoint: return "InvalidEndpoint";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::EmptyPath: return "EmptyPath";
    case ErrorCode::NumericalDivergence: return "NumericalDivergence";
    case ErrorCode::Overconstrained: return "Overconstrained";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gpnav
