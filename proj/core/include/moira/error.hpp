#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace moira {

enum class ErrorCode {
  kValidation,
  kNotFound,
  kDuplicateName,
  kEmptyPool,
  kCacheInvalid,
  kTransport,
  kProtocol,
  kUnparsableResponse,
  kRoutingFailed,
  kRoutingTransport,
  kNoExpertSelected,
  kDispatchTransport,
  kBudgetExceeded,
  kParse,
  kSchema,
  kExtraction,
};

/// Machine-readable name, e.g. "validation_error". Stable across releases.
std::string_view to_string(ErrorCode code) noexcept;

/// Coarse grouping used by the CLI exit codes and HTTP status mapping.
enum class ErrorClass { kValidation, kTransport };
ErrorClass classify(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace moira
