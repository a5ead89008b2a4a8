#include "amrevol/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include "amrevol/error.hpp"
#include "amrevol/jsonl.hpp"

extern char** environ;

namespace amrevol {

namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kProxyVars[] = {"http_proxy",  "https_proxy", "ftp_proxy", "all_proxy",
                                      "HTTP_PROXY",  "HTTPS_PROXY", "FTP_PROXY", "ALL_PROXY",
                                      "no_proxy",    "NO_PROXY"};

bool is_proxy_var(std::string_view entry) {
  for (const char* name : kProxyVars) {
    const std::string_view n(name);
    if (entry.size() > n.size() && entry.starts_with(n) && entry[n.size()] == '=') return true;
  }
  return false;
}

std::optional<std::string> resolve_executable(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name.find('/') != std::string::npos) {
    if (::access(name.c_str(), X_OK) == 0) return name;
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  std::string_view dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
  while (!dirs.empty()) {
    auto colon = dirs.find(':');
    std::string dir(dirs.substr(0, colon));
    dirs = colon == std::string_view::npos ? std::string_view{} : dirs.substr(colon + 1);
    if (dir.empty()) dir = ".";
    std::string candidate = dir + "/" + name;
    struct stat st {};
    if (::stat(candidate.c_str(), &st) == 0 && S_ISREG(st.st_mode) &&
        ::access(candidate.c_str(), X_OK) == 0) {
      return candidate;
    }
  }
  return std::nullopt;
}

void keep_tail(std::string& buf, const char* data, std::size_t n, std::size_t cap) {
  buf.append(data, n);
  if (buf.size() > 2 * cap + 4096) buf.erase(0, buf.size() - cap);
}

void finish_tail(std::string& buf, std::size_t cap) {
  if (buf.size() > cap) buf.erase(0, buf.size() - cap);
}

bool write_file(const std::filesystem::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  return static_cast<bool>(out);
}

VerificationReport setup_error(const std::string& subject, std::string message) {
  VerificationReport r;
  r.subject_id = subject;
  r.status = VerificationStatus::setup_error;
  r.stderr_tail = std::move(message);
  return r;
}

struct Pipe {
  int fds[2] = {-1, -1};
  bool open() { return ::pipe2(fds, O_CLOEXEC) == 0; }
  void close_read() { if (fds[0] >= 0) { ::close(fds[0]); fds[0] = -1; } }
  void close_write() { if (fds[1] >= 0) { ::close(fds[1]); fds[1] = -1; } }
  ~Pipe() { close_read(); close_write(); }
};

}  // namespace

std::optional<Verdict> parse_verdict(std::string_view stdout_text) {
  std::string_view line;
  std::size_t pos = 0;
  bool found = false;
  while (pos <= stdout_text.size()) {
    auto nl = stdout_text.find('\n', pos);
    auto cur = stdout_text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!cur.empty() && cur.back() == '\r') cur.remove_suffix(1);
    if (cur.starts_with(kVerdictPrefix)) {
      line = cur;
      found = true;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (!found) return std::nullopt;

  auto rest = line.substr(kVerdictPrefix.size());
  auto sp = rest.find(' ');
  if (sp == std::string_view::npos) return std::nullopt;
  const auto status = rest.substr(0, sp);
  rest = rest.substr(sp + 1);
  auto sp2 = rest.find(' ');
  const auto count = rest.substr(0, sp2);
  Verdict v;
  auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), v.failures);
  if (ec != std::errc{} || ptr != count.data() + count.size() || v.failures < 0) return std::nullopt;
  if (sp2 != std::string_view::npos) v.error = std::string(rest.substr(sp2 + 1));
  if (status == "pass") {
    v.pass = true;
  } else if (status != "fail") {
    return std::nullopt;
  }
  return v;
}

ProcessExecutor::ProcessExecutor(ProcessExecutorConfig config) : config_(std::move(config)) {}

VerificationReport ProcessExecutor::run(const TestJob& job, const ExecutionLimits& limits) {
  const auto interpreter = resolve_executable(config_.interpreter);
  if (!interpreter) return setup_error(job.subject_id, "guest interpreter not found: " + config_.interpreter);
  if (config_.driver_script.empty() || !std::filesystem::is_regular_file(config_.driver_script)) {
    return setup_error(job.subject_id, "driver script not found: " + config_.driver_script.string());
  }

  std::string tmpl = (config_.temp_root / "amrv-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) {
    return setup_error(job.subject_id, std::string("cannot create work dir: ") + std::strerror(errno));
  }
  const std::filesystem::path workdir = tmpl;
  struct Cleanup {
    std::filesystem::path dir;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
    }
  } cleanup{workdir};

  if (!write_file(workdir / ("solution." + config_.extension), job.code) ||
      !write_file(workdir / ("tests." + config_.extension), job.tests)) {
    return setup_error(job.subject_id, "cannot write job files");
  }

  // Everything the child touches is prepared before fork.
  const std::string driver = std::filesystem::absolute(config_.driver_script).string();
  const std::string workdir_str = workdir.string();
  std::vector<char*> argv{const_cast<char*>(interpreter->c_str()), const_cast<char*>(driver.c_str()),
                          const_cast<char*>(workdir_str.c_str()), nullptr};
  std::vector<char*> envp;
  for (char** e = environ; e && *e; ++e) {
    if (!is_proxy_var(*e)) envp.push_back(*e);
  }
  envp.push_back(nullptr);
  const rlimit mem{limits.memory_cap, limits.memory_cap};
  const rlimit no_core{0, 0};

  Pipe out, err, exec_status;
  if (!out.open() || !err.open() || !exec_status.open()) {
    return setup_error(job.subject_id, std::string("pipe: ") + std::strerror(errno));
  }

  const auto started = Clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) return setup_error(job.subject_id, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(out.fds[1], STDOUT_FILENO);
    ::dup2(err.fds[1], STDERR_FILENO);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    ::setrlimit(RLIMIT_AS, &mem);
    ::setrlimit(RLIMIT_CORE, &no_core);
    if (::chdir(workdir_str.c_str()) == 0) ::execve(argv[0], argv.data(), envp.data());
    const int code = errno;
    [[maybe_unused]] auto n = ::write(exec_status.fds[1], &code, sizeof code);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  out.close_write();
  err.close_write();
  exec_status.close_write();

  int exec_errno = 0;
  if (::read(exec_status.fds[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno) {
    ::waitpid(pid, nullptr, 0);
    return setup_error(job.subject_id, std::string("cannot execute interpreter: ") + std::strerror(exec_errno));
  }

  const auto deadline = started + std::chrono::duration_cast<Clock::duration>(
                                      std::chrono::duration<double>(limits.wall_timeout));
  std::string out_buf, err_buf;
  bool timed_out = false;
  bool exited = false;
  int wait_status = 0;
  char chunk[8192];
  bool out_open = true, err_open = true;

  auto drain = [&](int fd, std::string& buf, bool& open_flag) {
    const ssize_t n = ::read(fd, chunk, sizeof chunk);
    if (n > 0) {
      keep_tail(buf, chunk, static_cast<std::size_t>(n), limits.max_output);
    } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
      open_flag = false;
    }
  };

  while (true) {
    if (!exited) {
      const pid_t w = ::waitpid(pid, &wait_status, WNOHANG);
      if (w == pid) {
        exited = true;
        ::kill(-pid, SIGKILL);  // stray grandchildren holding the pipes
      }
    }
    if (exited && !out_open && !err_open) break;
    const auto now = Clock::now();
    if (!exited && now >= deadline) {
      timed_out = true;
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &wait_status, 0);
      exited = true;
      continue;
    }
    pollfd fds[2];
    nfds_t nfds = 0;
    if (out_open) fds[nfds++] = {out.fds[0], POLLIN, 0};
    if (err_open) fds[nfds++] = {err.fds[0], POLLIN, 0};
    int wait_ms = 20;
    if (!exited) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
      wait_ms = static_cast<int>(std::clamp<long long>(left, 1, 20));
    }
    if (nfds == 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(wait_ms));
      continue;
    }
    const int ready = ::poll(fds, nfds, wait_ms);
    if (ready <= 0) {
      if (exited) {
        // Process is gone and nothing is left to read.
        out_open = err_open = false;
      }
      continue;
    }
    for (nfds_t i = 0; i < nfds; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      if (fds[i].fd == out.fds[0]) {
        drain(out.fds[0], out_buf, out_open);
      } else {
        drain(err.fds[0], err_buf, err_open);
      }
    }
  }
  finish_tail(out_buf, limits.max_output);
  finish_tail(err_buf, limits.max_output);

  VerificationReport r;
  r.subject_id = job.subject_id;
  r.duration = std::chrono::duration<double>(Clock::now() - started).count();
  r.stdout_tail = std::move(out_buf);
  r.stderr_tail = std::move(err_buf);
  if (timed_out) {
    r.status = VerificationStatus::timeout;
  } else if (auto v = parse_verdict(r.stdout_tail)) {
    r.status = v->pass ? VerificationStatus::pass : VerificationStatus::fail;
  } else {
    r.status = VerificationStatus::crash;
  }
  return r;
}

StubExecutor::StubExecutor(std::vector<StubRule> rules, VerificationStatus fallback) {
  std::optional<VerificationStatus> catch_all;
  std::vector<StubRule> specific;
  for (auto& rule : rules) {
    if (rule.match.empty()) {
      if (!catch_all) catch_all = rule.status;
    } else {
      specific.push_back(std::move(rule));
    }
  }
  const VerificationStatus otherwise = catch_all.value_or(fallback);
  decide_ = [specific = std::move(specific), otherwise](const TestJob& job) {
    for (const auto& rule : specific) {
      if (job.code.find(rule.match) != std::string::npos ||
          job.tests.find(rule.match) != std::string::npos) {
        return rule.status;
      }
    }
    return otherwise;
  };
}

StubExecutor::StubExecutor(Decider decide) : decide_(std::move(decide)) {
  if (!decide_) throw InvalidArgument("stub executor needs a decider");
}

VerificationReport StubExecutor::run(const TestJob& job, const ExecutionLimits&) {
  runs_.fetch_add(1);
  VerificationReport r;
  r.subject_id = job.subject_id;
  r.status = decide_(job);
  switch (r.status) {
    case VerificationStatus::pass: r.stdout_tail = "AMRV1 pass 0\n"; break;
    case VerificationStatus::fail: r.stdout_tail = "AMRV1 fail 1\n"; break;
    case VerificationStatus::setup_error: r.stderr_tail = "stub setup error"; break;
    default: break;
  }
  return r;
}

std::vector<StubRule> load_stub_script(const std::filesystem::path& path) {
  std::vector<StubRule> rules;
  for (const auto& rec : read_jsonl(path, "stub_script").records) {
    try {
      StubRule rule;
      if (auto it = rec.value.find("match"); it != rec.value.end() && !it->is_null()) {
        rule.match = it->get<std::string>();
      }
      rule.status = parse_verification_status(rec.value.at("status").get<std::string>());
      rules.push_back(std::move(rule));
    } catch (const std::exception& e) {
      throw CorruptRecord(rec.line, e.what());
    }
  }
  return rules;
}

void save_stub_script(const std::filesystem::path& path, const std::vector<StubRule>& rules) {
  std::vector<Json> records;
  for (const auto& r : rules) {
    Json j;
    j["match"] = r.match.empty() ? Json(nullptr) : Json(r.match);
    j["status"] = to_string(r.status);
    records.push_back(std::move(j));
  }
  write_jsonl(path, make_header("stub_script"), records);
}

VerificationReport run_tests(Executor& executor, const TestJob& job, const ExecutionLimits& limits) {
  return executor.run(job, limits);
}

std::vector<VerificationReport> run_batch(Executor& executor, std::span<const TestJob> jobs,
                                          std::size_t parallelism, const ExecutionLimits& limits) {
  if (parallelism == 0) throw InvalidArgument("parallelism must be at least 1");
  std::vector<VerificationReport> reports(jobs.size());
  if (jobs.empty()) return reports;
  auto run_one = [&](std::size_t i) {
    try {
      reports[i] = executor.run(jobs[i], limits);
    } catch (const std::exception& e) {
      reports[i] = VerificationReport{jobs[i].subject_id, VerificationStatus::crash, "", e.what(), 0.0};
    }
  };
  const std::size_t workers = std::min(parallelism, jobs.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_one(i);
    return reports;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
        run_one(i);
      }
    });
  }
  pool.clear();
  return reports;
}

}  // namespace amrevol
