#pragma once

#include <string>
#include <utility>
#include <vector>

namespace amrevol::detail {

struct HttpResult {
  int status = 0;  // 0 when no HTTP response was received
  std::string body;
  std::string error;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// POSTs a JSON body to a full URL (http:// or https://). Never throws on
/// transport failures; they come back as status 0 with `error` set.
HttpResult http_post_json(const std::string& url, const std::string& body,
                          const Headers& headers, double timeout_seconds);

}  // namespace amrevol::detail
