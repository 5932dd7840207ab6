#include "http_client.hpp"

#include <httplib.h>

#include "moira/error.hpp"

namespace moira::detail {

nlohmann::json post_json(const Uri& endpoint, const nlohmann::json& body,
                         std::chrono::milliseconds timeout) {
  if (endpoint.scheme != "http") {
    throw Error(ErrorCode::kTransport,
                "scheme '" + endpoint.scheme + "' is not supported by this build: " +
                    endpoint.str());
  }
  httplib::Client client(endpoint.host, endpoint.port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  auto res = client.Post(endpoint.path, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kTransport,
                "POST " + endpoint.str() + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::kTransport,
                "POST " + endpoint.str() + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocol,
                "response from " + endpoint.str() + " is not JSON: " + e.what());
  }
}

}  // namespace moira::detail
