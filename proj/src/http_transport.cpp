#include <httplib.h>

#include "amrevol/error.hpp"
#include "amrevol/teacher.hpp"
#include "http.hpp"

namespace amrevol {

namespace detail {

HttpResult http_post_json(const std::string& url, const std::string& body,
                          const Headers& headers, double timeout_seconds) {
  HttpResult out;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    out.error = "URL has no scheme: " + url;
    return out;
  }
  const auto path_begin = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_begin);
  const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

  httplib::Client client(origin);
  if (!client.is_valid()) {
    out.error = "unsupported endpoint: " + origin;
    return out;
  }
  const auto sec = static_cast<time_t>(timeout_seconds);
  const auto usec = static_cast<time_t>((timeout_seconds - static_cast<double>(sec)) * 1e6);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  httplib::Headers h;
  std::string content_type = "application/json";
  for (const auto& [k, v] : headers) {
    if (k == "Content-Type") {
      content_type = v;
    } else {
      h.emplace(k, v);
    }
  }
  auto res = client.Post(path, h, body, content_type);
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

}  // namespace detail

HttpChatTransport::HttpChatTransport(HttpTransportConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) throw InvalidArgument("teacher endpoint URL is empty");
}

Json HttpChatTransport::request_body(const ChatRequest& request) {
  Json body;
  body["model"] = request.model;
  Json messages = Json::array();
  messages.push_back(Json{{"role", "system"}, {"content", request.system}});
  messages.push_back(Json{{"role", "user"}, {"content", request.user}});
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  return body;
}

ChatResponse HttpChatTransport::parse_response(const std::string& body) {
  ChatResponse r;
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw TransportError(std::string("malformed completion response: ") + e.what());
  }
  try {
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    r.content = content.is_null() ? std::string{} : content.get<std::string>();
    const std::string finish = choice.value("finish_reason", std::string("stop"));
    r.finish_reason = finish == "stop"     ? FinishReason::stop
                      : finish == "length" ? FinishReason::length
                                           : FinishReason::error;
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      r.usage.prompt_tokens = u->value("prompt_tokens", std::int64_t{0});
      r.usage.completion_tokens = u->value("completion_tokens", std::int64_t{0});
    }
  } catch (const Json::exception& e) {
    throw TransportError(std::string("unexpected completion response shape: ") + e.what());
  }
  return r;
}

ChatResponse HttpChatTransport::send(const ChatRequest& request) {
  detail::Headers headers{{"Content-Type", "application/json"}};
  if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  const auto res = detail::http_post_json(config_.url, request_body(request).dump(), headers,
                                          config_.timeout_seconds);
  if (res.status == 0) throw TransportError("teacher request failed: " + res.error);
  if (res.status == 401 || res.status == 403) {
    throw AuthError("teacher endpoint rejected credentials (HTTP " + std::to_string(res.status) + ")");
  }
  if (res.status == 408 || res.status == 429 || res.status >= 500) {
    throw TransportError("teacher endpoint returned HTTP " + std::to_string(res.status));
  }
  if (res.status != 200) {
    throw RequestInvalid("teacher endpoint returned HTTP " + std::to_string(res.status) + ": " +
                         res.body.substr(0, 200));
  }
  return parse_response(res.body);
}

}  // namespace amrevol
