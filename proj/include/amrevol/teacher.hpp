#pragma once

// Chat-completion gateway over a teacher endpoint, with retries, a request
// budget, a parallelism bound and a scripted mock transport for offline runs.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "amrevol/domain.hpp"

namespace amrevol {

struct ChatRequest {
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 3000;
  std::string model;

  bool operator==(const ChatRequest&) const = default;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason v) noexcept;

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  TokenUsage usage;
};

/// Throws InvalidArgument when temperature is outside [0, 2] or max_tokens < 1.
void check_request(const ChatRequest& request);

/// The wire. Implementations throw TransportError for transient failures,
/// AuthError for credential rejection and RequestInvalid for anything the
/// server will never accept.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

struct HttpTransportConfig {
  std::string url;  // full endpoint URL, e.g. https://api.openai.com/v1/chat/completions
  std::string api_key;
  double timeout_seconds = 120.0;
};

/// POSTs {model, messages:[system, user], temperature, max_tokens}.
class HttpChatTransport final : public ChatTransport {
 public:
  explicit HttpChatTransport(HttpTransportConfig config);
  ChatResponse send(const ChatRequest& request) override;

  static Json request_body(const ChatRequest& request);
  /// Reads choices[0].message.content, finish_reason and usage.
  static ChatResponse parse_response(const std::string& body);

 private:
  HttpTransportConfig config_;
};

/// One line of a mock script. An empty `match` puts the entry on the ordered
/// fallback queue. `fault` injects an error instead of a reply:
/// "transient", "auth" or "invalid".
struct MockEntry {
  std::string match;
  std::string response;
  std::string fault;
};

/// Deterministic scripted teacher.
///
/// A request is looked up by exact user text first. Several entries for the
/// same text are served in order and the last one repeats. Otherwise the next
/// fallback entry is consumed. A request that matches nothing is an error
/// (RequestInvalid), so a missing script line fails loudly.
class ScriptedTeacher final : public ChatTransport {
 public:
  explicit ScriptedTeacher(std::vector<MockEntry> entries);

  ChatResponse send(const ChatRequest& request) override;

  std::size_t requests_served() const;

 private:
  struct Queue {
    std::vector<MockEntry> entries;
    std::size_t next = 0;
  };
  mutable std::mutex mutex_;
  std::map<std::string, Queue> by_match_;
  std::deque<MockEntry> fallback_;
  std::size_t served_ = 0;
};

/// Deterministic approximation used by the mock: whitespace-separated words.
std::int64_t approx_tokens(std::string_view text);

void save_mock_script(const std::filesystem::path& path, const std::vector<MockEntry>& entries);
std::vector<MockEntry> load_mock_script(const std::filesystem::path& path);

struct GatewayOptions {
  int max_retries = 3;  // retries after the first attempt
  std::chrono::milliseconds initial_backoff{500};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_backoff{8000};
  std::size_t parallelism = 4;  // in-flight requests
  std::string default_model = "gpt-3.5-turbo-1106";
  /// Replaceable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats {
  std::uint64_t calls = 0;     // complete_chat invocations admitted by the budget
  std::uint64_t attempts = 0;  // transport sends, retries included
  std::uint64_t retries = 0;
  std::size_t peak_in_flight = 0;
};

/// Thread-safe client. Copies made by with_budget share the transport,
/// the parallelism bound and the statistics.
class TeacherGateway {
 public:
  explicit TeacherGateway(std::shared_ptr<ChatTransport> transport, GatewayOptions options = {});

  /// Throws InvalidArgument (bad request, before dispatch), TransportError
  /// (retries exhausted), AuthError, RequestInvalid, BudgetExceeded.
  ChatResponse complete_chat(const ChatRequest& request) const;

  /// Handle whose calls fail with BudgetExceeded after `limit` calls.
  TeacherGateway with_budget(std::uint64_t limit) const;

  GatewayStats stats() const;
  const GatewayOptions& options() const noexcept { return shared_->options; }

 private:
  struct Shared {
    std::shared_ptr<ChatTransport> transport;
    GatewayOptions options;
    std::mutex mutex;
    std::condition_variable slot_free;
    std::size_t in_flight = 0;
    std::size_t peak_in_flight = 0;
    std::atomic<std::uint64_t> calls{0};
    std::atomic<std::uint64_t> attempts{0};
    std::atomic<std::uint64_t> retries{0};
  };
  struct Budget {
    std::uint64_t limit = 0;
    std::atomic<std::uint64_t> used{0};
  };

  std::shared_ptr<Shared> shared_;
  std::shared_ptr<Budget> budget_;  // null = unlimited
};

}  // namespace amrevol
