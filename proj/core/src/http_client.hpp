#pragma once

#include <chrono>

#include <nlohmann/json.hpp>

#include "moira/uri.hpp"

namespace moira::detail {

/// POSTs `body` as JSON and returns the parsed JSON response.
/// Connection failures, timeouts and non-2xx statuses throw Error(kTransport);
/// a 2xx reply that is not valid JSON throws Error(kProtocol).
nlohmann::json post_json(const Uri& endpoint, const nlohmann::json& body,
                         std::chrono::milliseconds timeout);

}  // namespace moira::detail
