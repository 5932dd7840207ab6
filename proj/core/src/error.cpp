#include "moira/error.hpp"

namespace moira {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kValidation: return "validation_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kDuplicateName: return "duplicate_name";
    case ErrorCode::kEmptyPool: return "empty_pool";
    case ErrorCode::kCacheInvalid: return "cache_invalid";
    case ErrorCode::kTransport: return "transport_error";
    case ErrorCode::kProtocol: return "protocol_error";
    case ErrorCode::kUnparsableResponse: return "unparsable_response";
    case ErrorCode::kRoutingFailed: return "routing_failed";
    case ErrorCode::kRoutingTransport: return "routing_transport_error";
    case ErrorCode::kNoExpertSelected: return "no_expert_selected";
    case ErrorCode::kDispatchTransport: return "dispatch_transport_error";
    case ErrorCode::kBudgetExceeded: return "budget_exceeded";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kSchema: return "schema_error";
    case ErrorCode::kExtraction: return "extraction_error";
  }
  return "unknown_error";
}

ErrorClass classify(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kTransport:
    case ErrorCode::kProtocol:
    case ErrorCode::kUnparsableResponse:
    case ErrorCode::kRoutingFailed:
    case ErrorCode::kRoutingTransport:
    case ErrorCode::kNoExpertSelected:
    case ErrorCode::kDispatchTransport:
      return ErrorClass::kTransport;
    default:
      return ErrorClass::kValidation;
  }
}

}  // namespace moira
