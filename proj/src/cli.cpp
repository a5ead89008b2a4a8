#include "amrevol/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "amrevol/decontam.hpp"
#include "amrevol/embedding.hpp"
#include "amrevol/error.hpp"
#include "amrevol/eval.hpp"
#include "amrevol/jsonl.hpp"
#include "amrevol/module_db.hpp"
#include "amrevol/pipeline.hpp"
#include "amrevol/prompts.hpp"
#include "amrevol/sandbox.hpp"
#include "amrevol/teacher.hpp"

#ifndef AMREVOL_VERSION
#define AMREVOL_VERSION "0.0.0"
#endif

namespace amrevol {

namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v == nullptr ? std::string() : std::string(v);
}

struct TeacherFlags {
  std::string mock_script;
  std::string url;
  std::string model;
  std::uint64_t max_requests = 0;
  int retries = 3;
};

struct ExecutorFlags {
  std::string kind = "process";
  std::string stub_script;
  std::string interpreter = "python3";
  std::string driver;
  double timeout = 10.0;
  std::size_t memory_mb = 512;
};

struct EmbedFlags {
  std::string kind = "local";
  std::size_t dim = 256;
  std::string url;
  std::string model;
  std::string mode = "full";
};

struct PromptFlags {
  std::string templates_dir;
  std::string one_shot;
};

struct Flags {
  std::size_t parallelism = 4;

  TeacherFlags teacher;
  ExecutorFlags executor;
  EmbedFlags embed;
  PromptFlags prompts;

  // synthesize
  std::string method = "direct";
  std::string instructions;
  std::string responses;
  std::string out;
  std::string db;
  double novelty_threshold = kDefaultNoveltyThreshold;
  std::size_t k_per_module = 1;
  std::size_t cap = 5;
  int repair_rounds = 1;
  bool regenerate_tests = false;
  bool include_decomposed = true;
  bool emit_code = false;
  std::string guest_tag = "python";

  // seed-db
  std::string seeds;

  // eval
  std::string problems;
  std::string completions;
  std::vector<int> ks{1};
  std::string composition = "auto";
  double temperature = 0.0;
  int samples = 1;

  // decontaminate
  std::string train;
  std::string test;
  std::size_t top_n = 5;
  bool judge = false;

  // validate
  std::string file;
};

void add_teacher(CLI::App* app, TeacherFlags& f) {
  app->add_option("--mock-script", f.mock_script, "Scripted teacher replies (JSONL); no network")
      ->check(CLI::ExistingFile);
  app->add_option("--teacher-url", f.url, "Chat-completions endpoint URL (key: TEACHER_API_KEY)");
  app->add_option("--teacher-model", f.model, "Model name sent to the endpoint");
  app->add_option("--max-requests", f.max_requests, "Stop after this many teacher calls (0 = no limit)");
  app->add_option("--retries", f.retries, "Retries per call on transient errors")
      ->check(CLI::NonNegativeNumber);
}

void add_executor(CLI::App* app, ExecutorFlags& f) {
  app->add_option("--executor", f.kind, "Test executor")
      ->check(CLI::IsMember({"process", "stub"}));
  app->add_option("--stub-script", f.stub_script, "Stub verdict rules (JSONL); default passes all")
      ->check(CLI::ExistingFile);
  app->add_option("--interpreter", f.interpreter, "Guest interpreter for the process executor");
  app->add_option("--driver", f.driver, "Guest test driver script");
  app->add_option("--timeout", f.timeout, "Wall-clock limit per test run, seconds")
      ->check(CLI::PositiveNumber);
  app->add_option("--memory-mb", f.memory_mb, "Address-space limit per test run, MiB")
      ->check(CLI::PositiveNumber);
}

void add_embed(CLI::App* app, EmbedFlags& f) {
  app->add_option("--embedder", f.kind, "Embedding provider")
      ->check(CLI::IsMember({"local", "remote"}));
  app->add_option("--embed-dim", f.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  app->add_option("--embed-url", f.url, "Embeddings endpoint URL (key: EMBED_API_KEY)");
  app->add_option("--embed-model", f.model, "Embedding model name");
  app->add_option("--embed-mode", f.mode, "Module text that is embedded")
      ->check(CLI::IsMember({"signature_only", "header", "full"}));
}

void add_prompts(CLI::App* app, PromptFlags& f) {
  app->add_option("--templates", f.templates_dir, "Directory of <template>.system.txt / .user.txt overrides")
      ->check(CLI::ExistingDirectory);
  app->add_option("--one-shot", f.one_shot, "JSON file of one-shot example overrides")
      ->check(CLI::ExistingFile);
}

// ---- --print-config ---------------------------------------------------------

// Effective values as a --config file: global options, then the chosen
// subcommand's as "<subcommand>.<option>". Unset paths are left out so the
// file-existence checks pass when it is read back.
class ConfigWriter {
 public:
  explicit ConfigWriter(std::ostream& out) : out_(out) {}

  void section(std::string prefix) { prefix_ = std::move(prefix); }

  void str(const char* key, const std::string& v) {
    if (!v.empty()) line(key, Json(v).dump());
  }
  template <class T>
  void num(const char* key, T v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest form that reads back exactly
    line(key, std::string(buf, res.ptr));
  }
  void flag(const char* key, bool v) { line(key, v ? "true" : "false"); }
  void ints(const char* key, const std::vector<int>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    line(key, s + "]");
  }

  void teacher(const TeacherFlags& f) {
    str("mock-script", f.mock_script);
    str("teacher-url", f.url);
    str("teacher-model", f.model);
    num("max-requests", f.max_requests);
    num("retries", f.retries);
  }
  void executor(const ExecutorFlags& f) {
    str("executor", f.kind);
    str("stub-script", f.stub_script);
    str("interpreter", f.interpreter);
    str("driver", f.driver);
    num("timeout", f.timeout);
    num("memory-mb", f.memory_mb);
  }
  void embed(const EmbedFlags& f) {
    str("embedder", f.kind);
    num("embed-dim", f.dim);
    str("embed-url", f.url);
    str("embed-model", f.model);
    str("embed-mode", f.mode);
  }
  void prompts(const PromptFlags& f) {
    str("templates", f.templates_dir);
    str("one-shot", f.one_shot);
  }

 private:
  void line(const char* key, const std::string& value) {
    out_ << prefix_ << key << "=" << value << "\n";
  }

  std::ostream& out_;
  std::string prefix_;
};

void print_config(const Flags& f, const std::string& sub, std::ostream& out) {
  ConfigWriter w(out);
  w.num("parallelism", f.parallelism);
  w.section(sub + ".");
  if (sub == "synthesize") {
    w.str("method", f.method);
    w.str("instructions", f.instructions);
    w.str("responses", f.responses);
    w.str("out", f.out);
    w.str("db", f.db);
    w.num("novelty-threshold", f.novelty_threshold);
    w.num("k-per-module", f.k_per_module);
    w.num("cap", f.cap);
    w.num("repair-rounds", f.repair_rounds);
    w.flag("regenerate-tests", f.regenerate_tests);
    w.flag("include-decomposed", f.include_decomposed);
    w.flag("emit-code", f.emit_code);
    w.str("guest-tag", f.guest_tag);
    w.teacher(f.teacher);
    w.executor(f.executor);
    w.embed(f.embed);
    w.prompts(f.prompts);
  } else if (sub == "seed-db") {
    w.str("seeds", f.seeds);
    w.str("db", f.db);
    w.num("novelty-threshold", f.novelty_threshold);
    w.str("guest-tag", f.guest_tag);
    w.teacher(f.teacher);
    w.executor(f.executor);
    w.embed(f.embed);
    w.prompts(f.prompts);
  } else if (sub == "eval") {
    w.str("problems", f.problems);
    w.str("completions", f.completions);
    w.ints("k", f.ks);
    w.str("composition", f.composition);
    w.num("temperature", f.temperature);
    w.num("samples", f.samples);
    w.str("out", f.out);
    w.str("guest-tag", f.guest_tag);
    w.teacher(f.teacher);
    w.executor(f.executor);
  } else if (sub == "decontaminate") {
    w.str("train", f.train);
    w.str("test", f.test);
    w.num("top-n", f.top_n);
    w.flag("judge", f.judge);
    w.str("out", f.out);
    w.teacher(f.teacher);
    w.embed(f.embed);
    w.prompts(f.prompts);
  } else if (sub == "db.stats") {
    w.str("db", f.db);
  } else if (sub == "validate") {
    w.str("file", f.file);
  }
}

// ---- service construction ----------------------------------------------------

std::unique_ptr<TeacherGateway> make_teacher(const Flags& f) {
  std::shared_ptr<ChatTransport> transport;
  if (!f.teacher.mock_script.empty()) {
    transport = std::make_shared<ScriptedTeacher>(load_mock_script(f.teacher.mock_script));
  } else if (!f.teacher.url.empty()) {
    transport = std::make_shared<HttpChatTransport>(
        HttpTransportConfig{f.teacher.url, env_or_empty("TEACHER_API_KEY"), 120.0});
  } else {
    throw UsageError("a teacher is required: pass --mock-script or --teacher-url");
  }
  GatewayOptions opts;
  opts.max_retries = f.teacher.retries;
  opts.parallelism = f.parallelism;
  if (!f.teacher.model.empty()) opts.default_model = f.teacher.model;
  auto gw = std::make_unique<TeacherGateway>(std::move(transport), opts);
  if (f.teacher.max_requests > 0) {
    return std::make_unique<TeacherGateway>(gw->with_budget(f.teacher.max_requests));
  }
  return gw;
}

std::unique_ptr<Executor> make_executor(const Flags& f) {
  if (f.executor.kind == "stub") {
    if (f.executor.stub_script.empty()) {
      return std::make_unique<StubExecutor>(std::vector<StubRule>{}, VerificationStatus::pass);
    }
    return std::make_unique<StubExecutor>(load_stub_script(f.executor.stub_script));
  }
  if (f.executor.driver.empty()) {
    throw UsageError("--executor process needs --driver <guest test driver script>");
  }
  ProcessExecutorConfig cfg;
  cfg.interpreter = f.executor.interpreter;
  cfg.driver_script = f.executor.driver;
  return std::make_unique<ProcessExecutor>(cfg);
}

ExecutionLimits limits_of(const Flags& f) {
  ExecutionLimits l;
  l.wall_timeout = f.executor.timeout;
  l.memory_cap = f.executor.memory_mb << 20;
  return l;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const Flags& f, std::size_t dim) {
  if (f.embed.kind == "remote") {
    if (f.embed.url.empty()) throw UsageError("--embedder remote needs --embed-url");
    RemoteEmbedderConfig cfg;
    cfg.url = f.embed.url;
    cfg.model = f.embed.model;
    cfg.api_key = env_or_empty("EMBED_API_KEY");
    cfg.dim = dim;
    return std::make_unique<RemoteEmbedder>(cfg);
  }
  return std::make_unique<LocalHashEmbedder>(dim);
}

PromptLibrary make_prompts(const Flags& f) {
  return PromptLibrary::load(f.prompts.templates_dir, f.prompts.one_shot);
}

ModuleDatabase open_db(const Flags& f) {
  if (fs::exists(f.db)) return ModuleDatabase::load(f.db);
  return ModuleDatabase(f.embed.dim, f.novelty_threshold, parse_embed_mode(f.embed.mode));
}

// ---- subcommands -----------------------------------------------------------

int cmd_synthesize(const Flags& f, std::ostream& out) {
  const Method method = parse_method(f.method);
  if (f.out.empty()) throw UsageError("synthesize needs --out <directory>");
  if (method == Method::amr && f.db.empty()) {
    throw UsageError("synthesize --method amr requires --db <modules.jsonl>");
  }
  if (f.instructions.empty()) throw UsageError("synthesize needs --instructions <file>");

  auto instructions = load_instructions(f.instructions);
  if (auto errs = validate_instructions(instructions); !errs.empty()) {
    throw InvalidArgument("instructions: " + errs.front());
  }
  auto teacher = make_teacher(f);
  const PromptLibrary prompts = make_prompts(f);
  std::unique_ptr<Executor> executor;
  if (method == Method::ansrepair || method == Method::amr) executor = make_executor(f);
  std::optional<ModuleDatabase> db;
  std::unique_ptr<EmbeddingProvider> embedder;
  if (method == Method::amr) {
    db.emplace(open_db(f));
    embedder = make_embedder(f, db->dim());
  }
  std::map<std::string, DistilledResponse> reuse;
  if (!f.responses.empty()) {
    for (auto& r : load_responses(f.responses)) {
      if (r.method == Method::direct) reuse.emplace(r.instruction_id, std::move(r));
    }
  }

  PipelineConfig cfg;
  cfg.method = method;
  cfg.guest_tag = f.guest_tag;
  cfg.model = f.teacher.model;
  cfg.k_per_module = f.k_per_module;
  cfg.cap = f.cap;
  cfg.repair_rounds = f.repair_rounds;
  cfg.regenerate_tests = f.regenerate_tests;
  cfg.include_decomposed = f.include_decomposed;
  cfg.parallelism = f.parallelism;
  cfg.limits = limits_of(f);
  cfg.emit_raw = !f.emit_code;
  cfg.db_path = f.db;
  const fs::path out_dir = f.out;
  fs::create_directories(out_dir);
  cfg.checkpoint = out_dir / "trace.jsonl";

  PipelineServices services;
  services.teacher = teacher.get();
  services.prompts = &prompts;
  services.executor = executor.get();
  services.embedder = embedder.get();
  services.db = db ? &*db : nullptr;

  PipelineResult result;
  try {
    result = run_pipeline(instructions, cfg, services, reuse.empty() ? nullptr : &reuse);
  } catch (const BudgetExceeded& e) {
    throw BudgetExceeded(std::string(e.what()) + "; finished items are checkpointed in " +
                         cfg.checkpoint.string() + ", rerun to resume");
  }
  save_responses(out_dir / "responses.jsonl", result.responses);
  auto sft = emit_sft_dataset(result.responses, instructions, out_dir / "sft.jsonl", cfg.emit_raw);

  out << "synthesize " << to_string(method) << ": " << result.responses.size() << " responses ("
      << result.resumed << " resumed, " << result.errors << " failed)";
  if (method == Method::amr) out << ", " << result.admitted << " modules admitted";
  out << "; sft " << sft.written << " written, " << sft.excluded << " excluded\n";
  return 0;
}

int cmd_seed_db(const Flags& f, std::ostream& out) {
  if (f.seeds.empty()) throw UsageError("seed-db needs --seeds <file>");
  if (f.db.empty()) throw UsageError("seed-db needs --db <modules.jsonl>");
  JsonlFile file = read_jsonl(f.seeds);
  auto seeds = decode_records<FunctionModule>(file);
  ModuleDatabase db = open_db(f);
  auto embedder = make_embedder(f, db.dim());
  auto teacher = make_teacher(f);
  auto executor = make_executor(f);
  const PromptLibrary prompts = make_prompts(f);

  PipelineServices services{teacher.get(), &prompts, executor.get(), embedder.get(), &db};
  PipelineConfig cfg;
  cfg.guest_tag = f.guest_tag;
  cfg.model = f.teacher.model;
  cfg.parallelism = f.parallelism;
  cfg.limits = limits_of(f);
  auto report = seed_module_db(seeds, services, cfg);
  db.save(f.db);
  out << "seed-db: " << report.admitted << " admitted, " << report.duplicate << " duplicate, "
      << report.rejected << " rejected; database holds " << db.size() << " modules\n";
  return 0;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  if (f.problems.empty()) throw UsageError("eval needs --problems <file>");
  auto problems = load_problems(f.problems);
  auto executor = make_executor(f);
  EvalOptions opts;
  opts.ks = f.ks;
  opts.limits = limits_of(f);
  opts.parallelism = f.parallelism;
  opts.composition = parse_composition(f.composition);

  PassAtKReport report;
  if (!f.completions.empty()) {
    CannedCompletions source(load_completions(f.completions));
    report = evaluate(problems, source, *executor, opts);
  } else {
    auto endpoint = make_teacher(f);
    ChatCompletionConfig cc;
    cc.model = f.teacher.model;
    cc.temperature = f.temperature;
    cc.samples = f.samples;
    cc.guest_tag = f.guest_tag;
    ChatCompletions source(*endpoint, cc);
    report = evaluate(problems, source, *executor, opts);
  }
  out << format_report(report);
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    std::ofstream o(fs::path(f.out) / "report.json", std::ios::binary);
    o << encode(report).dump(2) << "\n";
    if (!o) throw IoError("cannot write " + (fs::path(f.out) / "report.json").string());
  }
  return 0;
}

int cmd_decontaminate(const Flags& f, std::ostream& out) {
  if (f.train.empty() || f.test.empty()) {
    throw UsageError("decontaminate needs --train <file> and --test <file>");
  }
  if (f.out.empty()) throw UsageError("decontaminate needs --out <directory>");
  auto train = load_instructions(f.train);
  auto test = load_instructions(f.test);
  auto embedder = make_embedder(f, f.embed.dim);
  std::unique_ptr<TeacherGateway> judge;
  if (f.judge) judge = make_teacher(f);
  const PromptLibrary prompts = make_prompts(f);
  DecontamOptions opts;
  opts.top_n = f.top_n;
  opts.parallelism = f.parallelism;
  opts.model = f.teacher.model;
  auto pairs = flag_contamination(train, test, *embedder, judge.get(), &prompts, opts);
  auto kept = filter_matches(train, pairs);
  const fs::path out_dir = f.out;
  fs::create_directories(out_dir);
  save_contamination_report(out_dir / "contamination_report.jsonl", pairs);
  save_instructions(out_dir / "filtered_train.jsonl", kept);
  out << "decontaminate: " << pairs.size() << " pairs, " << (train.size() - kept.size())
      << " training samples removed, " << kept.size() << " kept\n";
  return 0;
}

int cmd_db_stats(const Flags& f, std::ostream& out) {
  if (f.db.empty()) throw UsageError("db stats needs --db <modules.jsonl>");
  auto db = ModuleDatabase::load(f.db);
  std::map<std::string, std::size_t> by_source;
  for (const auto& m : db.entries()) ++by_source[std::string(to_string(m.source))];
  out << "modules            " << db.size() << "\n";
  out << "dim                " << db.dim() << "\n";
  out << "novelty_threshold  " << db.novelty_threshold() << "\n";
  out << "embed_mode         " << to_string(db.embed_mode()) << "\n";
  out << "format_version     " << db.version() << "\n";
  for (const auto& [src, n] : by_source) {
    out << "source." << src << std::string(src.size() < 12 ? 12 - src.size() : 1, ' ') << n
        << "\n";
  }
  return 0;
}

// ---- validate --------------------------------------------------------------

std::string guess_kind(const Json& j) {
  if (!j.is_object()) return "";
  if (j.contains("response") && j.contains("instruction")) return "sft";
  if (j.contains("instruction_id") && j.contains("method")) return "responses";
  if (j.contains("code") && (j.contains("module_id") || j.contains("embedding"))) return "modules";
  if (j.contains("test") || j.contains("test_list") || j.contains("tests")) return "problems";
  if (j.contains("problem_id") && j.contains("completion")) return "completions";
  if (j.contains("text")) return "instructions";
  return "";
}

std::vector<std::string> check_record(const std::string& kind, const Json& j) {
  if (kind == "instructions") {
    Json copy = j;
    if (!copy.contains("id") && copy.contains("text") && copy["text"].is_string()) {
      copy["id"] = derive_instruction_id(copy["text"].get<std::string>());
    }
    return validate(decode<Instruction>(copy));
  }
  if (kind == "responses") return validate(decode<DistilledResponse>(j));
  if (kind == "modules" || kind == "seeds") return validate(decode<FunctionModule>(j));
  if (kind == "sft") return validate(decode<SftRecord>(j));
  if (kind == "problems") return validate(problem_from_json(j));
  if (kind == "trace") {
    decode_stage_trace(j);
    return {};
  }
  if (kind == "contamination") {
    decode_contamination_pair(j);
    return {};
  }
  if (kind == "completions") {
    if (!j.contains("problem_id") || !j.contains("completion") || !j["completion"].is_string()) {
      return {"completion: expected {problem_id, completion}"};
    }
    return {};
  }
  if (kind == "mock_script" || kind == "stub_script") return {};
  return {"kind: unknown record kind"};
}

int cmd_validate(const Flags& f, std::ostream& out) {
  JsonlFile file = read_jsonl(f.file);
  std::string kind;
  if (file.header) kind = (*file.header)["kind"].get<std::string>();
  if (kind.empty() && !file.records.empty()) kind = guess_kind(file.records.front().value);
  if (kind == "mock_script") load_mock_script(f.file);
  if (kind == "stub_script") load_stub_script(f.file);
  if (kind == "modules") ModuleDatabase::load(f.file);

  std::size_t bad = 0;
  std::set<std::string> ids;
  for (const auto& rec : file.records) {
    std::vector<std::string> errs;
    try {
      errs = check_record(kind, rec.value);
      if (kind == "instructions" && errs.empty()) {
        std::string id = rec.value.contains("id") ? rec.value["id"].get<std::string>()
                                                  : derive_instruction_id(rec.value["text"].get<std::string>());
        if (!ids.insert(id).second) errs.push_back("id: duplicate");
      }
    } catch (const std::exception& e) {
      errs.push_back(e.what());
    }
    for (const auto& e : errs) out << f.file << ":" << rec.line << ": " << e << "\n";
    if (!errs.empty()) ++bad;
  }
  out << f.file << ": " << (kind.empty() ? "unknown" : kind) << ", " << file.records.size()
      << " records, " << bad << " invalid\n";
  return bad == 0 && !kind.empty() ? 0 : 1;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"AMR-Evol code instruction data synthesis and evaluation", "amrevol"};
  app.set_version_flag("--version", std::string("amrevol ") + AMREVOL_VERSION + " (db format " +
                                        std::to_string(kFormatVersion) + ")");
  app.set_config("--config", "", "TOML-style key = value file; command-line flags win");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--parallelism", f.parallelism, "Concurrent items / test runs / teacher calls")
      ->check(CLI::PositiveNumber);
  bool want_config = false;
  app.add_flag("--print-config", want_config, "Print the effective configuration and exit")
      ->configurable(false);

  auto* synth = app.add_subcommand("synthesize", "Distil responses for an instruction set");
  synth->add_option("--method", f.method, "Distillation method")
      ->check(CLI::IsMember({"direct", "cot", "ansrepair", "amr"}));
  synth->add_option("--instructions", f.instructions, "instructions.jsonl")
      ->check(CLI::ExistingFile);
  synth->add_option("--responses", f.responses, "Direct responses to reuse as R_d (amr)")
      ->check(CLI::ExistingFile);
  synth->add_option("--out", f.out, "Output directory (responses, sft, trace)");
  synth->add_option("--db", f.db, "Module database file, updated in place (amr)");
  synth->add_option("--novelty-threshold", f.novelty_threshold, "Used when the database is new")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--k-per-module", f.k_per_module, "Retrieved modules per decomposed module")
      ->check(CLI::PositiveNumber);
  synth->add_option("--cap", f.cap, "Maximum retrieved modules per instruction")
      ->check(CLI::PositiveNumber);
  synth->add_option("--repair-rounds", f.repair_rounds, "AnsRepair rounds")
      ->check(CLI::NonNegativeNumber);
  synth->add_flag("--regenerate-tests,!--reuse-tests", f.regenerate_tests,
                  "AnsRepair: new tests after each repair");
  synth->add_flag("--include-decomposed,!--retrieved-only", f.include_decomposed,
                  "AMR context holds the decomposed modules too");
  synth->add_flag("--emit-code,!--emit-raw", f.emit_code,
                  "SFT response is the extracted code instead of the full reply");
  synth->add_option("--guest-tag", f.guest_tag, "Fence language tag of guest code");
  add_teacher(synth, f.teacher);
  add_executor(synth, f.executor);
  add_embed(synth, f.embed);
  add_prompts(synth, f.prompts);

  auto* seed = app.add_subcommand("seed-db", "Verify seed functions and build a module database");
  seed->add_option("--seeds", f.seeds, "Seed modules (JSONL with at least `code`)")
      ->check(CLI::ExistingFile);
  seed->add_option("--db", f.db, "Module database file, created or extended");
  seed->add_option("--novelty-threshold", f.novelty_threshold, "Used when the database is new")
      ->check(CLI::Range(0.0, 1.0));
  seed->add_option("--guest-tag", f.guest_tag, "Fence language tag of guest code");
  add_teacher(seed, f.teacher);
  add_executor(seed, f.executor);
  add_embed(seed, f.embed);
  add_prompts(seed, f.prompts);

  auto* ev = app.add_subcommand("eval", "Score completions with pass@k");
  ev->add_option("--problems", f.problems, "problems.jsonl (native, HumanEval or MBPP shape)")
      ->check(CLI::ExistingFile);
  ev->add_option("--completions", f.completions, "Canned {problem_id, completion} lines")
      ->check(CLI::ExistingFile);
  ev->add_option("--k", f.ks, "k values, e.g. 1,10")->delimiter(',')->check(CLI::PositiveNumber);
  ev->add_option("--composition", f.composition, "How completions join prompts")
      ->check(CLI::IsMember({"auto", "prompt_plus_completion", "full_function"}));
  ev->add_option("--temperature", f.temperature, "Sampling temperature for endpoint completions")
      ->check(CLI::Range(0.0, 2.0));
  ev->add_option("--samples", f.samples, "Samples per problem when temperature > 0")
      ->check(CLI::PositiveNumber);
  ev->add_option("--out", f.out, "Directory for report.json");
  ev->add_option("--guest-tag", f.guest_tag, "Fence language tag of guest code");
  add_teacher(ev, f.teacher);
  add_executor(ev, f.executor);

  auto* dec = app.add_subcommand("decontaminate", "Flag training samples that match test samples");
  dec->add_option("--train", f.train, "Training instructions")->check(CLI::ExistingFile);
  dec->add_option("--test", f.test, "Test instructions")->check(CLI::ExistingFile);
  dec->add_option("--top-n", f.top_n, "Neighbours judged per test sample")
      ->check(CLI::PositiveNumber);
  dec->add_flag("--judge,!--score-only", f.judge, "Ask the teacher for a MATCH/NO_MATCH verdict");
  dec->add_option("--out", f.out, "Output directory");
  add_teacher(dec, f.teacher);
  add_embed(dec, f.embed);
  add_prompts(dec, f.prompts);

  auto* dbcmd = app.add_subcommand("db", "Module database utilities");
  dbcmd->require_subcommand(1);
  auto* stats = dbcmd->add_subcommand("stats", "Summarise a module database");
  stats->add_option("--db", f.db, "Module database file")->required()->check(CLI::ExistingFile);

  auto* val = app.add_subcommand("validate", "Check a JSONL file against its record schema");
  val->add_option("file", f.file, "File to check")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "amrevol: " << e.what() << "\n";
    err << "Run with --help for usage.\n";
    return 2;
  }

  if (want_config) {
    std::string sub;
    for (const auto* c : {synth, seed, ev, dec, stats, val}) {
      if (c->parsed()) sub = c == stats ? "db.stats" : c->get_name();
    }
    print_config(f, sub, out);
    return 0;
  }

  try {
    if (synth->parsed()) return cmd_synthesize(f, out);
    if (seed->parsed()) return cmd_seed_db(f, out);
    if (ev->parsed()) return cmd_eval(f, out);
    if (dec->parsed()) return cmd_decontaminate(f, out);
    if (stats->parsed()) return cmd_db_stats(f, out);
    if (val->parsed()) return cmd_validate(f, out);
  } catch (const UsageError& e) {
    err << "amrevol: " << e.what() << "\n";
    err << "Run with --help for usage.\n";
    return 2;
  } catch (const std::exception& e) {
    err << "amrevol: error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("amrevol");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run_cli(static_cast<int>(storage.size()), argv.data(), out, err);
}

}  // namespace amrevol
