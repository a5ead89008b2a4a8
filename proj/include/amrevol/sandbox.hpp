#pragma once

// Runs guest code plus its unit tests in a child process and classifies the
// outcome. The child protocol: `<interpreter> <driver_script> <workdir>`,
// where workdir holds solution.<ext> and tests.<ext>; the driver prints one
// verdict line "AMRV1 pass 0" / "AMRV1 fail <n> [error]" as its last AMRV1
// line and exits 0 (pass), 1 (fail) or 2 (internal error).

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amrevol/domain.hpp"

namespace amrevol {

inline constexpr std::string_view kVerdictPrefix = "AMRV1 ";

struct ExecutionLimits {
  double wall_timeout = 10.0;              // seconds
  std::size_t memory_cap = 512u << 20;     // bytes of address space
  std::size_t max_output = 64u << 10;      // bytes kept per stream (tail)
};

struct TestJob {
  std::string subject_id;
  std::string code;
  std::string tests;
};

struct Verdict {
  bool pass = false;
  int failures = 0;
  std::string error;
};

/// Parses the last AMRV1 line of `stdout_text`. Malformed or absent -> nullopt.
std::optional<Verdict> parse_verdict(std::string_view stdout_text);

/// Must be safe to call from several threads at once.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual VerificationReport run(const TestJob& job, const ExecutionLimits& limits) = 0;
};

struct ProcessExecutorConfig {
  std::string interpreter = "python3";  // name looked up on PATH, or a path
  std::filesystem::path driver_script;
  std::filesystem::path temp_root = std::filesystem::temp_directory_path();
  std::string extension = "py";
};

/// Fresh process per job: own process group, RLIMIT_AS = memory_cap, no core
/// dumps, proxy variables removed from the environment, killed at the wall
/// timeout. Network is not otherwise isolated.
class ProcessExecutor final : public Executor {
 public:
  explicit ProcessExecutor(ProcessExecutorConfig config);
  VerificationReport run(const TestJob& job, const ExecutionLimits& limits) override;

 private:
  ProcessExecutorConfig config_;
};

struct StubRule {
  std::string match;  // substring of code or tests; empty matches everything
  VerificationStatus status = VerificationStatus::pass;
};

/// Scripted executor for runs without a guest runtime. The first rule whose
/// match occurs in the job's code or tests decides the status.
class StubExecutor final : public Executor {
 public:
  using Decider = std::function<VerificationStatus(const TestJob&)>;

  explicit StubExecutor(std::vector<StubRule> rules,
                        VerificationStatus fallback = VerificationStatus::fail);
  explicit StubExecutor(Decider decide);

  VerificationReport run(const TestJob& job, const ExecutionLimits& limits) override;
  std::size_t runs() const noexcept { return runs_.load(); }

 private:
  Decider decide_;
  std::atomic<std::size_t> runs_{0};
};

/// Stub script file: JSONL of {match, status}; a rule with match null or ""
/// is the fallback.
std::vector<StubRule> load_stub_script(const std::filesystem::path& path);
void save_stub_script(const std::filesystem::path& path, const std::vector<StubRule>& rules);

VerificationReport run_tests(Executor& executor, const TestJob& job,
                             const ExecutionLimits& limits = {});

/// Reports come back in job order. At most `parallelism` jobs run at once.
std::vector<VerificationReport> run_batch(Executor& executor, std::span<const TestJob> jobs,
                                          std::size_t parallelism,
                                          const ExecutionLimits& limits = {});

}  // namespace amrevol
