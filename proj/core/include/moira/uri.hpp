#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace moira {

/// An http(s) endpoint split into the parts an HTTP client needs.
struct Uri {
  std::string scheme;  // "http" or "https"
  std::string host;
  std::uint16_t port = 0;
  std::string path;  // always begins with '/'

  /// "scheme://host:port" without the path.
  std::string origin() const;
  std::string str() const;
};

/// Parses `scheme://host[:port][/path]`. Only http and https are accepted.
/// Throws Error(kValidation) on anything else.
Uri parse_uri(std::string_view text);

bool is_valid_uri(std::string_view text) noexcept;

}  // namespace moira
