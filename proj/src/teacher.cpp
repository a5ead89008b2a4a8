#include "amrevol/teacher.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <thread>

#include "amrevol/error.hpp"
#include "amrevol/jsonl.hpp"

namespace amrevol {

std::string_view to_string(FinishReason v) noexcept {
  switch (v) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

void check_request(const ChatRequest& request) {
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
    throw InvalidArgument("temperature must be in [0, 2]");
  }
  if (request.max_tokens < 1) throw InvalidArgument("max_tokens must be at least 1");
}

std::int64_t approx_tokens(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

ScriptedTeacher::ScriptedTeacher(std::vector<MockEntry> entries) {
  for (auto& e : entries) {
    if (e.match.empty()) {
      fallback_.push_back(std::move(e));
    } else {
      by_match_[e.match].entries.push_back(std::move(e));
    }
  }
}

ChatResponse ScriptedTeacher::send(const ChatRequest& request) {
  MockEntry entry;
  {
    std::lock_guard lock(mutex_);
    if (auto it = by_match_.find(request.user); it != by_match_.end()) {
      Queue& q = it->second;
      entry = q.entries[q.next];
      if (q.next + 1 < q.entries.size()) ++q.next;
    } else if (!fallback_.empty()) {
      entry = std::move(fallback_.front());
      fallback_.pop_front();
    } else {
      std::string head = request.user.substr(0, 120);
      throw RequestInvalid("mock teacher has no script entry for request: " + head);
    }
    ++served_;
  }
  if (entry.fault == "transient") throw TransportError("scripted transient failure");
  if (entry.fault == "auth") throw AuthError("scripted auth failure");
  if (entry.fault == "invalid") throw RequestInvalid("scripted invalid request");
  ChatResponse r;
  r.content = entry.response;
  r.finish_reason = FinishReason::stop;
  r.usage.prompt_tokens = approx_tokens(request.system) + approx_tokens(request.user);
  r.usage.completion_tokens = approx_tokens(entry.response);
  return r;
}

std::size_t ScriptedTeacher::requests_served() const {
  std::lock_guard lock(mutex_);
  return served_;
}

void save_mock_script(const std::filesystem::path& path, const std::vector<MockEntry>& entries) {
  std::vector<Json> records;
  records.reserve(entries.size());
  for (const auto& e : entries) {
    Json j;
    j["match"] = e.match.empty() ? Json(nullptr) : Json(e.match);
    j["response"] = e.response;
    if (!e.fault.empty()) j["fault"] = e.fault;
    records.push_back(std::move(j));
  }
  write_jsonl(path, make_header("mock_script"), records);
}

std::vector<MockEntry> load_mock_script(const std::filesystem::path& path) {
  std::vector<MockEntry> out;
  for (const auto& rec : read_jsonl(path, "mock_script").records) {
    try {
      MockEntry e;
      const auto& j = rec.value;
      if (auto it = j.find("match"); it != j.end() && !it->is_null()) e.match = it->get<std::string>();
      e.response = j.value("response", std::string{});
      e.fault = j.value("fault", std::string{});
      if (!e.fault.empty() && e.fault != "transient" && e.fault != "auth" && e.fault != "invalid") {
        throw InvalidArgument("unknown fault '" + e.fault + "'");
      }
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw CorruptRecord(rec.line, ex.what());
    }
  }
  return out;
}

TeacherGateway::TeacherGateway(std::shared_ptr<ChatTransport> transport, GatewayOptions options)
    : shared_(std::make_shared<Shared>()) {
  if (!transport) throw InvalidArgument("gateway needs a transport");
  if (options.parallelism == 0) throw InvalidArgument("parallelism must be at least 1");
  if (options.max_retries < 0) throw InvalidArgument("max_retries must be non-negative");
  if (!options.sleep) {
    options.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  shared_->transport = std::move(transport);
  shared_->options = std::move(options);
}

ChatResponse TeacherGateway::complete_chat(const ChatRequest& request) const {
  check_request(request);
  if (budget_) {
    const auto used = budget_->used.fetch_add(1) + 1;
    if (used > budget_->limit) {
      throw BudgetExceeded("teacher request budget of " + std::to_string(budget_->limit) +
                           " exhausted");
    }
  }
  Shared& s = *shared_;
  s.calls.fetch_add(1);

  ChatRequest effective = request;
  if (effective.model.empty()) effective.model = s.options.default_model;

  {
    std::unique_lock lock(s.mutex);
    s.slot_free.wait(lock, [&] { return s.in_flight < s.options.parallelism; });
    ++s.in_flight;
    s.peak_in_flight = std::max(s.peak_in_flight, s.in_flight);
  }
  struct Release {
    Shared& s;
    ~Release() {
      {
        std::lock_guard lock(s.mutex);
        --s.in_flight;
      }
      s.slot_free.notify_one();
    }
  } release{s};

  auto backoff = s.options.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    s.attempts.fetch_add(1);
    try {
      return s.transport->send(effective);
    } catch (const TransportError&) {
      if (attempt >= s.options.max_retries) throw;
    }
    s.retries.fetch_add(1);
    s.options.sleep(backoff);
    backoff = std::min(s.options.max_backoff,
                       std::chrono::milliseconds(static_cast<std::int64_t>(
                           static_cast<double>(backoff.count()) * s.options.backoff_factor)));
  }
}

TeacherGateway TeacherGateway::with_budget(std::uint64_t limit) const {
  if (limit == 0) throw InvalidArgument("budget limit must be at least 1");
  TeacherGateway handle = *this;
  handle.budget_ = std::make_shared<Budget>();
  handle.budget_->limit = limit;
  return handle;
}

GatewayStats TeacherGateway::stats() const {
  GatewayStats out;
  out.calls = shared_->calls.load();
  out.attempts = shared_->attempts.load();
  out.retries = shared_->retries.load();
  std::lock_guard lock(shared_->mutex);
  out.peak_in_flight = shared_->peak_in_flight;
  return out;
}

}  // namespace amrevol
