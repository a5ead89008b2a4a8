#pragma once

// Execution-based benchmark runner: completions are composed with problem
// prompts, run against the problem tests and scored with unbiased pass@k.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amrevol/domain.hpp"
#include "amrevol/sandbox.hpp"
#include "amrevol/teacher.hpp"

namespace amrevol {

/// 1 - C(n-c, k) / C(n, k) as 1 - prod_{i=n-c+1}^{n} (1 - k/i).
/// Throws DomainError unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(std::int64_t n, std::int64_t c, std::int64_t k);

/// Accepts the native shape {id, prompt, entry_point, tests, reference_solution},
/// HumanEval {task_id, prompt, entry_point, canonical_solution, test} and
/// MBPP {task_id, text, code, test_list, test_setup_code}.
EvalProblem problem_from_json(const Json& j);
std::vector<EvalProblem> load_problems(const std::filesystem::path& path);

enum class Composition { prompt_plus_completion, full_function, automatic };

std::string_view to_string(Composition c) noexcept;
Composition parse_composition(std::string_view s);

/// Runnable source for a completion. `automatic` picks full_function when the
/// completion defines the entry point at column 0.
std::string compose_program(const EvalProblem& problem, std::string_view completion,
                            Composition mode = Composition::automatic);

struct CompletionSet {
  std::string problem_id;
  std::vector<std::string> completions;
  bool greedy = true;
  double temperature = 0.0;
};

/// Line-delimited {problem_id, completion}; several lines for one problem
/// accumulate in file order.
std::map<std::string, CompletionSet> load_completions(const std::filesystem::path& path);

class CompletionSource {
 public:
  virtual ~CompletionSource() = default;
  virtual CompletionSet complete(const EvalProblem& problem) = 0;
};

class CannedCompletions final : public CompletionSource {
 public:
  explicit CannedCompletions(std::map<std::string, CompletionSet> sets);
  /// Throws InvalidArgument for a problem with no completion.
  CompletionSet complete(const EvalProblem& problem) override;

 private:
  std::map<std::string, CompletionSet> sets_;
};

struct ChatCompletionConfig {
  std::string model;
  double temperature = 0.0;  // 0 means greedy and forces n = 1
  int samples = 1;
  int max_tokens = 1024;
  std::string guest_tag = "python";
  std::string system =
      "Complete the following Python function. Answer with the code in Markdown format.";
};

/// Samples completions from a model-under-test endpoint; fenced code is
/// extracted from each reply.
class ChatCompletions final : public CompletionSource {
 public:
  ChatCompletions(const TeacherGateway& endpoint, ChatCompletionConfig config);
  CompletionSet complete(const EvalProblem& problem) override;

 private:
  const TeacherGateway& endpoint_;
  ChatCompletionConfig config_;
};

struct EvalOptions {
  std::vector<int> ks{1};
  ExecutionLimits limits;
  std::size_t parallelism = 4;
  Composition composition = Composition::automatic;
};

struct ProblemResult {
  std::string problem_id;
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::vector<VerificationStatus> statuses;

  bool operator==(const ProblemResult&) const = default;
};

struct PassAtKEstimate {
  int k = 1;
  std::optional<double> value;  // absent when some problem has n < k

  bool operator==(const PassAtKEstimate&) const = default;
};

struct PassAtKReport {
  std::vector<ProblemResult> problems;
  std::vector<PassAtKEstimate> estimates;
  std::map<std::string, std::size_t> status_counts;
  double wall_seconds = 0.0;
  double exec_seconds = 0.0;  // sum of job durations

  /// Ignores the runtime figures.
  bool operator==(const PassAtKReport& other) const;
};

/// Runs every completion of every problem. Per-job failures count as
/// non-pass; a setup_error aborts with SetupError carrying the diagnostics.
PassAtKReport evaluate(std::span<const EvalProblem> problems, CompletionSource& source,
                       Executor& executor, const EvalOptions& options = {});

Json encode(const PassAtKReport& r);
/// Plain-text table: one row per pass@k, then problem and status counts.
std::string format_report(const PassAtKReport& r);

}  // namespace amrevol
