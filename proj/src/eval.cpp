#include "amrevol/eval.hpp"

#include <chrono>
#include <iomanip>
#include <set>
#include <sstream>

#include "amrevol/error.hpp"
#include "amrevol/jsonl.hpp"
#include "amrevol/parser.hpp"

namespace amrevol {

double pass_at_k(std::int64_t n, std::int64_t c, std::int64_t k) {
  if (n < 0 || c < 0 || k < 0) throw DomainError("pass_at_k: arguments must be non-negative");
  if (c > n) throw DomainError("pass_at_k: c exceeds n");
  if (k < 1 || k > n) throw DomainError("pass_at_k: k must be in [1, n]");
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;
  double prod = 1.0;
  for (std::int64_t i = n - c + 1; i <= n; ++i) {
    prod *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  }
  return 1.0 - prod;
}

namespace {

std::string str_field(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw InvalidArgument(std::string("problem field '") + key + "' missing or not a string");
  }
  return j[key].get<std::string>();
}

std::string id_field(const Json& j) {
  const Json& v = j.at("task_id");
  return v.is_string() ? v.get<std::string>() : v.dump();
}

// HumanEval tests define check(candidate); the driver calls test_* with no
// arguments, so check is renamed and called with the entry point.
std::string wrap_check(std::string_view test, const std::string& entry_point) {
  std::string out;
  std::size_t pos = 0;
  bool renamed = false;
  while (pos <= test.size()) {
    std::size_t eol = test.find('\n', pos);
    if (eol == std::string_view::npos) eol = test.size();
    std::string_view line = test.substr(pos, eol - pos);
    if (line.rfind("def check(", 0) == 0) {
      out += "def _humaneval_check(";
      out += line.substr(10);
      renamed = true;
    } else {
      out += line;
    }
    if (eol < test.size()) out += '\n';
    pos = eol + 1;
  }
  if (!renamed) return out;
  while (!out.empty() && out.back() == '\n') out.pop_back();
  out += "\n\n\ndef test_humaneval():\n    _humaneval_check(" + entry_point + ")\n";
  return out;
}

}  // namespace

EvalProblem problem_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("problem record is not an object");
  try {
    if (j.contains("id") && j.contains("tests")) return decode<EvalProblem>(j);

    EvalProblem p;
    if (j.contains("test_list")) {  // MBPP
      p.id = id_field(j);
      p.prompt = str_field(j, "text");
      const std::string code = str_field(j, "code");
      auto defs = scan_top_level_definitions(code);
      if (j.contains("entry_point") && j["entry_point"].is_string()) {
        p.entry_point = j["entry_point"].get<std::string>();
      } else if (!defs.empty()) {
        p.entry_point = defs.back().name;
      }
      std::string tests;
      if (j.contains("test_setup_code") && j["test_setup_code"].is_string()) {
        tests = j["test_setup_code"].get<std::string>();
        if (!tests.empty()) tests += "\n\n";
      }
      tests += "def test_mbpp():\n";
      for (const auto& t : j.at("test_list")) tests += "    " + t.get<std::string>() + "\n";
      p.tests = std::move(tests);
      p.reference_solution = code;
      return p;
    }
    if (j.contains("task_id") && j.contains("test")) {  // HumanEval
      p.id = id_field(j);
      p.prompt = str_field(j, "prompt");
      p.entry_point = str_field(j, "entry_point");
      p.tests = wrap_check(str_field(j, "test"), p.entry_point);
      if (j.contains("canonical_solution") && j["canonical_solution"].is_string()) {
        p.reference_solution = j["canonical_solution"].get<std::string>();
      }
      return p;
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidArgument(std::string("bad problem record: ") + e.what());
  }
  throw InvalidArgument("unrecognised problem record shape");
}

std::vector<EvalProblem> load_problems(const std::filesystem::path& path) {
  JsonlFile file = read_jsonl(path, "problems");
  std::vector<EvalProblem> out;
  std::set<std::string> ids;
  for (const auto& rec : file.records) {
    EvalProblem p;
    try {
      p = problem_from_json(rec.value);
    } catch (const std::exception& e) {
      throw CorruptRecord(rec.line, e.what());
    }
    for (const auto& err : validate(p)) throw CorruptRecord(rec.line, err);
    if (!ids.insert(p.id).second) throw CorruptRecord(rec.line, "id: duplicate");
    out.push_back(std::move(p));
  }
  return out;
}

std::string_view to_string(Composition c) noexcept {
  switch (c) {
    case Composition::prompt_plus_completion: return "prompt_plus_completion";
    case Composition::full_function: return "full_function";
    case Composition::automatic: return "auto";
  }
  return "auto";
}

Composition parse_composition(std::string_view s) {
  if (s == "prompt_plus_completion" || s == "prompt") return Composition::prompt_plus_completion;
  if (s == "full_function" || s == "full") return Composition::full_function;
  if (s == "auto" || s == "automatic") return Composition::automatic;
  throw InvalidArgument("unknown composition mode: " + std::string(s));
}

std::string compose_program(const EvalProblem& problem, std::string_view completion,
                            Composition mode) {
  if (mode == Composition::automatic) {
    mode = Composition::prompt_plus_completion;
    for (const auto& d : scan_top_level_definitions(completion)) {
      if (d.name == problem.entry_point) {
        mode = Composition::full_function;
        break;
      }
    }
  }
  if (mode == Composition::prompt_plus_completion) {
    return problem.prompt + std::string(completion);
  }
  // The prompt's imports may be needed by a completion that restates the function.
  std::string out;
  for (const auto& imp : top_level_imports(problem.prompt)) out += imp + "\n";
  if (!out.empty()) out += "\n";
  out += completion;
  return out;
}

std::map<std::string, CompletionSet> load_completions(const std::filesystem::path& path) {
  JsonlFile file = read_jsonl(path, "completions");
  std::map<std::string, CompletionSet> sets;
  for (const auto& rec : file.records) {
    const Json& j = rec.value;
    if (!j.is_object() || !j.contains("problem_id") || !j.contains("completion") ||
        !j["completion"].is_string()) {
      throw CorruptRecord(rec.line, "expected {problem_id, completion}");
    }
    const Json& pid = j["problem_id"];
    const std::string id = pid.is_string() ? pid.get<std::string>() : pid.dump();
    auto& set = sets[id];
    set.problem_id = id;
    set.completions.push_back(j["completion"].get<std::string>());
    if (j.contains("temperature") && j["temperature"].is_number()) {
      set.temperature = j["temperature"].get<double>();
    }
  }
  for (auto& [id, set] : sets) set.greedy = set.completions.size() == 1 && set.temperature == 0.0;
  return sets;
}

CannedCompletions::CannedCompletions(std::map<std::string, CompletionSet> sets)
    : sets_(std::move(sets)) {}

CompletionSet CannedCompletions::complete(const EvalProblem& problem) {
  auto it = sets_.find(problem.id);
  if (it == sets_.end() || it->second.completions.empty()) {
    throw InvalidArgument("no completion for problem " + problem.id);
  }
  return it->second;
}

ChatCompletions::ChatCompletions(const TeacherGateway& endpoint, ChatCompletionConfig config)
    : endpoint_(endpoint), config_(std::move(config)) {
  if (config_.samples < 1) throw InvalidArgument("samples must be at least 1");
}

CompletionSet ChatCompletions::complete(const EvalProblem& problem) {
  CompletionSet set;
  set.problem_id = problem.id;
  set.greedy = config_.temperature == 0.0;
  set.temperature = config_.temperature;
  const int n = set.greedy ? 1 : config_.samples;
  for (int i = 0; i < n; ++i) {
    ChatRequest req;
    req.system = config_.system;
    req.user = problem.prompt;
    req.temperature = config_.temperature;
    req.max_tokens = config_.max_tokens;
    req.model = config_.model;
    auto reply = endpoint_.complete_chat(req);
    std::string code = extract_primary_solution(reply.content, config_.guest_tag);
    set.completions.push_back(code.empty() ? reply.content : code);
  }
  return set;
}

bool PassAtKReport::operator==(const PassAtKReport& other) const {
  return problems == other.problems && estimates == other.estimates &&
         status_counts == other.status_counts;
}

PassAtKReport evaluate(std::span<const EvalProblem> problems, CompletionSource& source,
                       Executor& executor, const EvalOptions& options) {
  if (options.ks.empty()) throw InvalidArgument("no k values requested");
  for (int k : options.ks) {
    if (k < 1) throw InvalidArgument("k values must be positive");
  }
  const auto start = std::chrono::steady_clock::now();

  PassAtKReport report;
  std::vector<TestJob> jobs;
  std::vector<std::size_t> owner;
  for (std::size_t p = 0; p < problems.size(); ++p) {
    const EvalProblem& prob = problems[p];
    CompletionSet set = source.complete(prob);
    if (set.completions.empty()) throw InvalidArgument("no completion for problem " + prob.id);
    ProblemResult r;
    r.problem_id = prob.id;
    r.n = static_cast<std::int64_t>(set.completions.size());
    report.problems.push_back(std::move(r));
    for (std::size_t i = 0; i < set.completions.size(); ++i) {
      jobs.push_back({prob.id + "#" + std::to_string(i),
                      compose_program(prob, set.completions[i], options.composition), prob.tests});
      owner.push_back(p);
    }
  }

  auto reports = run_batch(executor, jobs, options.parallelism, options.limits);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& rep = reports[i];
    if (rep.status == VerificationStatus::setup_error) {
      throw SetupError("sandbox setup failed on " + rep.subject_id + ": " + rep.stderr_tail);
    }
    auto& pr = report.problems[owner[i]];
    pr.statuses.push_back(rep.status);
    if (rep.status == VerificationStatus::pass) ++pr.c;
    ++report.status_counts[std::string(to_string(rep.status))];
    report.exec_seconds += rep.duration;
  }

  for (int k : options.ks) {
    PassAtKEstimate e;
    e.k = k;
    bool available = !report.problems.empty();
    double sum = 0.0;
    for (const auto& pr : report.problems) {
      if (pr.n < k) {
        available = false;
        break;
      }
      sum += pass_at_k(pr.n, pr.c, k);
    }
    if (available) e.value = sum / static_cast<double>(report.problems.size());
    report.estimates.push_back(e);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

Json encode(const PassAtKReport& r) {
  Json j;
  Json est = Json::object();
  for (const auto& e : r.estimates) {
    est["pass@" + std::to_string(e.k)] = e.value ? Json(*e.value) : Json(nullptr);
  }
  j["pass_at_k"] = std::move(est);
  Json probs = Json::array();
  for (const auto& p : r.problems) {
    Json s = Json::array();
    for (auto st : p.statuses) s.push_back(to_string(st));
    probs.push_back(Json{{"problem_id", p.problem_id}, {"n", p.n}, {"c", p.c}, {"statuses", s}});
  }
  j["problems"] = std::move(probs);
  Json counts = Json::object();
  for (const auto& [k, v] : r.status_counts) counts[k] = v;
  j["status_counts"] = std::move(counts);
  j["runtime"] = Json{{"wall_seconds", r.wall_seconds}, {"exec_seconds", r.exec_seconds}};
  return j;
}

std::string format_report(const PassAtKReport& r) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "metric" << "value\n";
  for (const auto& e : r.estimates) {
    out << std::setw(12) << ("pass@" + std::to_string(e.k));
    if (e.value) {
      out << std::fixed << std::setprecision(4) << *e.value << "\n";
    } else {
      out << "n/a (fewer than " << e.k << " samples)\n";
    }
  }
  std::size_t samples = 0;
  for (const auto& p : r.problems) samples += static_cast<std::size_t>(p.n);
  out << std::setw(12) << "problems" << r.problems.size() << "\n";
  out << std::setw(12) << "samples" << samples << "\n";
  for (auto st : {VerificationStatus::pass, VerificationStatus::fail, VerificationStatus::timeout,
                  VerificationStatus::crash}) {
    const std::string name(to_string(st));
    auto it = r.status_counts.find(name);
    out << std::setw(12) << name << (it == r.status_counts.end() ? 0 : it->second) << "\n";
  }
  return out.str();
}

}  // namespace amrevol
