#include "moira/uri.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "moira/error.hpp"

namespace moira {
namespace {

[[noreturn]] void bad(std::string_view text, std::string_view why) {
  throw Error(ErrorCode::kValidation,
              "invalid endpoint '" + std::string(text) + "': " + std::string(why));
}

bool host_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ||
         c == '_';
}

}  // namespace

std::string Uri::origin() const {
  return scheme + "://" + host + ":" + std::to_string(port);
}

std::string Uri::str() const { return origin() + path; }

Uri parse_uri(std::string_view text) {
  Uri uri;
  const auto sep = text.find("://");
  if (sep == std::string_view::npos) bad(text, "missing scheme");
  uri.scheme = std::string(text.substr(0, sep));
  std::transform(uri.scheme.begin(), uri.scheme.end(), uri.scheme.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (uri.scheme != "http" && uri.scheme != "https") bad(text, "scheme must be http or https");

  std::string_view rest = text.substr(sep + 3);
  const auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  uri.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  if (uri.path.find_first_of(" \t\r\n") != std::string::npos) bad(text, "whitespace in path");

  std::string_view host = authority;
  uri.port = uri.scheme == "https" ? 443 : 80;
  if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
    host = authority.substr(0, colon);
    const auto port_text = authority.substr(colon + 1);
    unsigned value = 0;
    auto [end, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
    if (ec != std::errc{} || end != port_text.data() + port_text.size() || value == 0 ||
        value > 65535) {
      bad(text, "invalid port");
    }
    uri.port = static_cast<std::uint16_t>(value);
  }
  if (host.empty()) bad(text, "empty host");
  if (!std::all_of(host.begin(), host.end(), host_char)) bad(text, "invalid host");
  uri.host = std::string(host);
  return uri;
}

bool is_valid_uri(std::string_view text) noexcept {
  try {
    parse_uri(text);
    return true;
  } catch (...) {
    return false;
  }
}

}  // namespace moira
