#include "amrevol/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <set>
#include <thread>
#include <utility>

#include "amrevol/error.hpp"
#include "amrevol/jsonl.hpp"
#include "amrevol/parser.hpp"

namespace amrevol {

std::vector<std::string> validate(const PipelineConfig& c) {
  std::vector<std::string> errs;
  if (c.method == Method::amr && c.db_path.empty()) errs.push_back("db_path: required for amr");
  if (c.k_per_module == 0) errs.push_back("k_per_module: must be positive");
  if (c.cap == 0) errs.push_back("cap: must be positive");
  if (c.repair_rounds < 0) errs.push_back("repair_rounds: must be >= 0");
  if (c.parallelism == 0) errs.push_back("parallelism: must be positive");
  if (c.guest_tag.empty()) errs.push_back("guest_tag: empty");
  if (!(c.limits.wall_timeout > 0)) errs.push_back("limits.wall_timeout: must be positive");
  return errs;
}

// ---- trace encoding ----------------------------------------------------

namespace {

FinishReason parse_finish_reason(std::string_view s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  if (s == "error") return FinishReason::error;
  throw InvalidArgument("unknown finish_reason: " + std::string(s));
}

Json encode_match(const std::optional<ScoredMatch>& m) {
  if (!m) return nullptr;
  return Json{{"module_id", m->module_id}, {"score", m->score}};
}

std::optional<ScoredMatch> decode_match(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return ScoredMatch{j.at("module_id").get<std::string>(), j.at("score").get<double>()};
}

Json string_array(const std::vector<std::string>& v) {
  Json a = Json::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

}  // namespace

Json encode(const TeacherCall& c) {
  Json j;
  j["stage"] = c.stage;
  j["template"] = to_string(c.template_id);
  j["user_prompt"] = c.user_prompt;
  j["reply"] = c.reply;
  j["finish_reason"] = to_string(c.finish_reason);
  j["prompt_tokens"] = c.usage.prompt_tokens;
  j["completion_tokens"] = c.usage.completion_tokens;
  return j;
}

Json encode(const CandidateTrace& c) {
  Json j;
  j["module"] = encode(c.module);
  j["novel"] = c.novel;
  j["nearest"] = encode_match(c.nearest);
  j["tests"] = c.tests;
  j["verification"] = c.verification ? encode(*c.verification) : Json(nullptr);
  j["admission"] = c.admission ? encode(*c.admission) : Json(nullptr);
  return j;
}

Json encode(const StageTrace& t) {
  Json j;
  j["index"] = t.index;
  j["instruction_id"] = t.instruction_id;
  j["method"] = to_string(t.method);
  j["status"] = t.status;
  j["error"] = t.error;
  Json calls = Json::array();
  for (const auto& c : t.calls) calls.push_back(encode(c));
  j["calls"] = std::move(calls);
  Json ver = Json::array();
  for (const auto& v : t.verifications) ver.push_back(encode(v));
  j["verifications"] = std::move(ver);
  j["rd_reused"] = t.rd_reused;
  j["decomposition_fallback"] = t.decomposition_fallback;
  j["decomposed"] = string_array(t.decomposed);
  j["retrieved"] = string_array(t.retrieved);
  Json cands = Json::array();
  for (const auto& c : t.candidates) cands.push_back(encode(c));
  j["candidates"] = std::move(cands);
  j["response"] = t.response ? encode(*t.response) : Json(nullptr);
  return j;
}

StageTrace decode_stage_trace(const Json& j) {
  try {
    StageTrace t;
    t.index = j.at("index").get<std::size_t>();
    t.instruction_id = j.at("instruction_id").get<std::string>();
    t.method = parse_method(j.at("method").get<std::string>());
    t.status = j.at("status").get<std::string>();
    t.error = j.value("error", std::string());
    for (const auto& c : j.at("calls")) {
      TeacherCall call;
      call.stage = c.at("stage").get<std::string>();
      call.template_id = parse_template_id(c.at("template").get<std::string>());
      call.user_prompt = c.at("user_prompt").get<std::string>();
      call.reply = c.at("reply").get<std::string>();
      call.finish_reason = parse_finish_reason(c.at("finish_reason").get<std::string>());
      call.usage.prompt_tokens = c.at("prompt_tokens").get<std::int64_t>();
      call.usage.completion_tokens = c.at("completion_tokens").get<std::int64_t>();
      t.calls.push_back(std::move(call));
    }
    for (const auto& v : j.at("verifications")) {
      t.verifications.push_back(decode<VerificationReport>(v));
    }
    t.rd_reused = j.at("rd_reused").get<bool>();
    t.decomposition_fallback = j.at("decomposition_fallback").get<bool>();
    t.decomposed = j.at("decomposed").get<std::vector<std::string>>();
    t.retrieved = j.at("retrieved").get<std::vector<std::string>>();
    for (const auto& c : j.at("candidates")) {
      CandidateTrace ct;
      ct.module = decode<FunctionModule>(c.at("module"));
      ct.novel = c.at("novel").get<bool>();
      ct.nearest = decode_match(c.at("nearest"));
      ct.tests = c.at("tests").get<std::string>();
      if (!c.at("verification").is_null()) {
        ct.verification = decode<VerificationReport>(c.at("verification"));
      }
      if (!c.at("admission").is_null()) {
        const Json& a = c.at("admission");
        ct.admission = AdmissionDecision{
            parse_admission_outcome(a.at("outcome").get<std::string>()),
            decode_match(a.at("nearest"))};
      }
      t.candidates.push_back(std::move(ct));
    }
    if (!j.at("response").is_null()) t.response = decode<DistilledResponse>(j.at("response"));
    return t;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidArgument(std::string("bad trace record: ") + e.what());
  }
}

// ---- trace file ----------------------------------------------------------

namespace {

struct TraceFile {
  std::optional<Json> header;
  std::vector<StageTrace> traces;
};

TraceFile read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.emplace_back(no, std::move(line));
  }

  TraceFile file;
  bool dropped_tail = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& [line_no, text] = lines[i];
    Json value;
    try {
      value = Json::parse(text);
    } catch (const Json::parse_error& e) {
      if (i + 1 == lines.size()) {
        dropped_tail = true;
        break;
      }
      throw CorruptRecord(line_no, e.what());
    }
    if (i == 0 && is_header(value)) {
      if (value["kind"] != "trace" || value["version"] != kFormatVersion) {
        throw VersionMismatch(path.string() + ": not a version " + std::to_string(kFormatVersion) +
                              " trace file");
      }
      file.header = std::move(value);
      continue;
    }
    try {
      file.traces.push_back(decode_stage_trace(value));
    } catch (const std::exception& e) {
      throw CorruptRecord(line_no, e.what());
    }
  }
  if (dropped_tail) {
    std::vector<Json> records;
    for (const auto& t : file.traces) records.push_back(encode(t));
    write_jsonl(path, file.header ? *file.header : Json(nullptr), records);
  }
  return file;
}

Json trace_header(const PipelineConfig& c) {
  Json extra;
  extra["method"] = to_string(c.method);
  extra["parallelism"] = c.parallelism;
  extra["guest_tag"] = c.guest_tag;
  return make_header("trace", std::move(extra));
}

// ---- per-item work ---------------------------------------------------------

// Errors that only affect the item at hand. Everything else stops the run.
bool is_item_error(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const TransportError&) {
    return true;
  } catch (const RequestInvalid&) {
    return true;
  } catch (const ParseFailure&) {
    return true;
  } catch (const EmptyText&) {
    return true;
  } catch (const Error&) {
    return false;
  } catch (const std::exception&) {
    return true;
  } catch (...) {
    return false;
  }
}

std::string describe(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

class ItemRun {
 public:
  ItemRun(const PipelineConfig& config, const PipelineServices& services,
          const ModuleDatabase* snapshot, const std::map<std::string, DistilledResponse>* reuse)
      : config_(config), services_(services), snapshot_(snapshot), reuse_(reuse) {}

  void run(const Instruction& ins, StageTrace& trace) {
    trace_ = &trace;
    switch (config_.method) {
      case Method::direct: trace.response = single(ins, TemplateId::direct, Method::direct); break;
      case Method::cot: trace.response = single(ins, TemplateId::cot, Method::cot); break;
      case Method::ansrepair: trace.response = ansrepair(ins); break;
      case Method::amr: trace.response = amr(ins); break;
    }
  }

 private:
  ChatResponse ask(std::string stage, TemplateId id, Bindings bindings) {
    ChatRequest req = services_.prompts->render_with_examples(id, std::move(bindings));
    req.model = config_.model;
    ChatResponse resp = services_.teacher->complete_chat(req);
    usage_.prompt_tokens += resp.usage.prompt_tokens;
    usage_.completion_tokens += resp.usage.completion_tokens;
    last_temperature_ = req.temperature;
    trace_->calls.push_back({std::move(stage), id, req.user, resp.content, resp.finish_reason,
                             resp.usage});
    return resp;
  }

  DistilledResponse make_response(const Instruction& ins, Method method, std::string markdown) {
    DistilledResponse r;
    r.instruction_id = ins.id;
    r.method = method;
    r.extracted_code = extract_primary_solution(markdown, config_.guest_tag);
    r.raw_markdown = std::move(markdown);
    r.teacher_meta.model =
        config_.model.empty() ? services_.teacher->options().default_model : config_.model;
    r.teacher_meta.temperature = last_temperature_;
    r.teacher_meta.prompt_tokens = usage_.prompt_tokens;
    r.teacher_meta.completion_tokens = usage_.completion_tokens;
    if (r.extracted_code.empty()) r.provenance["extraction"] = "failed";
    return r;
  }

  // Code as the prompts show it: fenced extraction, else the raw reply.
  std::string shown_answer(const DistilledResponse& r) const {
    return r.extracted_code.empty() ? r.raw_markdown : fence(r.extracted_code, config_.guest_tag);
  }

  DistilledResponse single(const Instruction& ins, TemplateId id, Method method) {
    const std::string slot = id == TemplateId::direct ? "instruction" : "question";
    auto reply = ask(std::string(to_string(id)), id, {{slot, ins.text}});
    return make_response(ins, method, reply.content);
  }

  VerificationReport verify(const std::string& subject, const std::string& code,
                            const std::string& tests) {
    if (tests.empty()) {
      VerificationReport r;
      r.subject_id = subject;
      r.status = VerificationStatus::fail;
      r.stderr_tail = "no tests in teacher reply";
      return r;
    }
    if (services_.executor == nullptr) throw InvalidArgument("no executor configured");
    return run_tests(*services_.executor, {subject, code, tests}, config_.limits);
  }

  std::string gen_tests(std::string stage, const std::string& question,
                        const std::string& answer) {
    auto reply = ask(std::move(stage), TemplateId::test_gen,
                     {{"question", question}, {"answer", answer}});
    return extract_primary_solution(reply.content, config_.guest_tag);
  }

  DistilledResponse ansrepair(const Instruction& ins) {
    auto first = ask("direct", TemplateId::direct, {{"instruction", ins.text}});
    DistilledResponse current = make_response(ins, Method::ansrepair, first.content);
    std::string tests = gen_tests("test_gen", ins.text, shown_answer(current));
    auto report = verify(ins.id, current.extracted_code, tests);
    trace_->verifications.push_back(report);
    int rounds = 0;
    while (report.status != VerificationStatus::pass && rounds < config_.repair_rounds) {
      const std::string tag = "[" + std::to_string(rounds) + "]";
      auto fixed = ask("repair" + tag, TemplateId::ans_repair,
                       {{"question", ins.text}, {"answer", shown_answer(current)}});
      current = make_response(ins, Method::ansrepair, fixed.content);
      if (config_.regenerate_tests) {
        tests = gen_tests("test_gen" + tag, ins.text, shown_answer(current));
      }
      report = verify(ins.id, current.extracted_code, tests);
      trace_->verifications.push_back(report);
      ++rounds;
    }
    current.provenance["verdict"] = std::string(to_string(report.status));
    current.provenance["repair_rounds"] = std::to_string(rounds);
    return current;
  }

  DistilledResponse amr(const Instruction& ins) {
    if (snapshot_ == nullptr || services_.embedder == nullptr) {
      throw InvalidArgument("amr needs a module database and an embedder");
    }
    const EmbedMode mode = snapshot_->embed_mode();

    // (a) initial response R_d
    DistilledResponse rd;
    if (reuse_ != nullptr) {
      if (auto it = reuse_->find(ins.id); it != reuse_->end()) {
        rd = it->second;
        trace_->rd_reused = true;
      }
    }
    if (!trace_->rd_reused) {
      auto reply = ask("direct", TemplateId::direct, {{"instruction", ins.text}});
      rd = make_response(ins, Method::direct, reply.content);
    }

    // (b) modular decomposition
    auto md = ask("decomposition", TemplateId::modular_decomposition,
                  {{"question", ins.text}, {"answer", shown_answer(rd)}});
    std::vector<FunctionModule> decomposed;
    try {
      decomposed = parse_function_modules(md.content, config_.guest_tag, ModuleSource::decomposed);
    } catch (const ParseFailure&) {
      trace_->decomposition_fallback = true;
      const std::string& code = rd.extracted_code;
      if (!code.empty()) {
        FunctionModule m;
        m.code = code;
        m.source = ModuleSource::decomposed;
        auto defs = scan_top_level_definitions(code);
        m.name = defs.empty() ? std::string("solution") : defs.front().name;
        m.signature = defs.empty() ? std::string() : defs.front().signature;
        m.description = ins.text;
        m.module_id = derive_module_id(m.code, m.source);
        decomposed.push_back(std::move(m));
      }
    }

    // (c) retrieval
    for (auto& m : decomposed) {
      ensure_embedding(m, *services_.embedder, mode);
      trace_->decomposed.push_back(m.module_id);
    }
    auto retrieved = snapshot_->retrieve_for(decomposed, config_.k_per_module, config_.cap,
                                             services_.embedder);
    for (const auto& m : retrieved) trace_->retrieved.push_back(m.module_id);

    // (d) adaptive evolution
    std::vector<FunctionModule> context;
    if (!retrieved.empty()) {
      if (config_.include_decomposed) context = decomposed;
      context.insert(context.end(), retrieved.begin(), retrieved.end());
    }
    auto evolved_reply = ask("evolution", TemplateId::adaptive_evolution,
                             {{"question", ins.text},
                              {"similar-functions", render_module_context(context, config_.guest_tag)}});

    // (e) novel modules: tests now, admission when the window closes
    std::vector<FunctionModule> evolved;
    try {
      evolved = parse_function_modules(evolved_reply.content, config_.guest_tag,
                                       ModuleSource::evolved);
    } catch (const ParseFailure&) {
    }
    std::set<std::string> seen;
    for (auto& m : evolved) {
      if (!seen.insert(m.module_id).second) continue;
      ensure_embedding(m, *services_.embedder, mode);
      CandidateTrace c;
      c.nearest = snapshot_->nearest(*m.embedding);
      c.novel = !c.nearest || c.nearest->score < snapshot_->novelty_threshold();
      if (c.novel) {
        const std::string question = m.description.empty() ? m.signature : m.description;
        c.tests = gen_tests("test_gen:" + m.module_id, question, fence(m.code, config_.guest_tag));
        c.verification = verify(m.module_id, m.code, c.tests);
      }
      c.module = std::move(m);
      trace_->candidates.push_back(std::move(c));
    }

    // (f) response
    DistilledResponse out = make_response(ins, Method::amr, evolved_reply.content);
    out.provenance["rd"] = trace_->rd_reused ? "reused" : "distilled";
    out.provenance["decomposed"] = std::to_string(decomposed.size());
    out.provenance["retrieved"] = std::to_string(retrieved.size());
    if (trace_->decomposition_fallback) out.provenance["decomposition"] = "fallback";
    return out;
  }

  const PipelineConfig& config_;
  const PipelineServices& services_;
  const ModuleDatabase* snapshot_;
  const std::map<std::string, DistilledResponse>* reuse_;
  StageTrace* trace_ = nullptr;
  TokenUsage usage_;
  double last_temperature_ = 0.0;
};

// Runs fn(i) for i in [begin, end), one thread per index when more than one.
template <class Fn>
void run_concurrently(std::size_t begin, std::size_t end, Fn&& fn) {
  if (end - begin <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) workers.emplace_back([&fn, i] { fn(i); });
}

// Applies the admissions of one finished item; keeps embeddings only on
// admitted modules so the trace can restore them.
std::size_t commit_admissions(StageTrace& t, ModuleDatabase* db) {
  std::size_t admitted = 0;
  for (auto& c : t.candidates) {
    if (db != nullptr && c.novel && c.verification) {
      c.admission = db->admit(c.module, *c.verification);
    }
    if (c.admission && c.admission->outcome == AdmissionOutcome::admitted) {
      c.module.verified = true;
      c.module.verification = c.verification;
      if (!c.module.embedding->normalized) c.module.embedding = normalized(*c.module.embedding);
      ++admitted;
    } else {
      c.module.embedding.reset();
    }
  }
  return admitted;
}

// The database without the modules in `exclude` (admitted later in the window).
ModuleDatabase snapshot_before(const ModuleDatabase& db, const std::set<std::string>& exclude) {
  if (exclude.empty()) return db;
  ModuleDatabase snap(db.dim(), db.novelty_threshold(), db.embed_mode());
  for (auto& m : db.entries()) {
    if (!exclude.count(m.module_id)) snap.restore(std::move(m));
  }
  return snap;
}

}  // namespace

std::vector<StageTrace> load_trace(const std::filesystem::path& path) {
  return read_trace_file(path).traces;
}

PipelineResult run_pipeline(std::span<const Instruction> instructions,
                            const PipelineConfig& config, const PipelineServices& services,
                            const std::map<std::string, DistilledResponse>* reuse) {
  for (const auto& e : validate(config)) {
    if (e.rfind("db_path:", 0) == 0 && services.db != nullptr) continue;
    throw InvalidArgument("pipeline config " + e);
  }
  if (services.teacher == nullptr || services.prompts == nullptr) {
    throw InvalidArgument("pipeline needs a teacher and a prompt library");
  }
  const bool amr = config.method == Method::amr;
  if (amr && services.db == nullptr) throw InvalidArgument("amr needs a module database");
  if (amr && services.embedder == nullptr) throw InvalidArgument("amr needs an embedder");
  if (amr && services.embedder->dim() != services.db->dim()) {
    throw DimensionMismatch(services.db->dim(), services.embedder->dim());
  }
  const std::size_t n = instructions.size();

  // checkpoint
  std::vector<std::optional<StageTrace>> done(n);
  std::size_t resumed = 0;
  std::optional<JsonlAppender> appender;
  if (!config.checkpoint.empty()) {
    if (std::filesystem::exists(config.checkpoint)) {
      TraceFile file = read_trace_file(config.checkpoint);
      if (file.header) {
        const Json& h = *file.header;
        if (h.value("method", std::string()) != to_string(config.method)) {
          throw InvalidArgument("checkpoint " + config.checkpoint.string() +
                                " was written for method " + h.value("method", std::string()));
        }
        if (h.value("parallelism", std::size_t{0}) != config.parallelism) {
          throw InvalidArgument("checkpoint " + config.checkpoint.string() +
                                " was written with parallelism " +
                                std::to_string(h.value("parallelism", std::size_t{0})) +
                                "; resume with the same value");
        }
      } else {
        write_jsonl(config.checkpoint, trace_header(config), [&] {
          std::vector<Json> recs;
          for (const auto& t : file.traces) recs.push_back(encode(t));
          return recs;
        }());
      }
      for (auto& t : file.traces) {
        if (t.index >= n || instructions[t.index].id != t.instruction_id) {
          throw InvalidArgument("checkpoint " + config.checkpoint.string() +
                                " does not match the instruction set at index " +
                                std::to_string(t.index));
        }
        if (done[t.index]) continue;
        done[t.index] = std::move(t);
        ++resumed;
      }
    } else {
      write_jsonl(config.checkpoint, trace_header(config), {});
    }
    appender.emplace(config.checkpoint);
  }

  // Admissions recorded in the trace but missing from the database (stopped
  // between trace append and database save).
  bool db_dirty = false;
  if (services.db != nullptr) {
    for (const auto& t : done) {
      if (!t) continue;
      for (const auto& c : t->candidates) {
        if (c.admission && c.admission->outcome == AdmissionOutcome::admitted &&
            c.module.embedding && !services.db->contains(c.module.module_id)) {
          db_dirty |= services.db->restore(c.module);
        }
      }
    }
  }
  auto save_db = [&] {
    if (amr && !config.db_path.empty()) services.db->save(config.db_path);
    db_dirty = false;
  };
  if (db_dirty) save_db();

  const std::size_t window = config.parallelism;
  for (std::size_t begin = 0; begin < n; begin += window) {
    const std::size_t end = std::min(n, begin + window);
    bool pending = false;
    std::set<std::string> exclude;
    for (std::size_t i = begin; i < end; ++i) {
      if (!done[i]) {
        pending = true;
        continue;
      }
      for (const auto& c : done[i]->candidates) {
        if (c.admission && c.admission->outcome == AdmissionOutcome::admitted) {
          exclude.insert(c.module.module_id);
        }
      }
    }
    if (!pending) continue;

    std::optional<ModuleDatabase> snapshot;
    if (services.db != nullptr && amr) snapshot.emplace(snapshot_before(*services.db, exclude));

    std::vector<StageTrace> fresh(end - begin);
    std::vector<std::exception_ptr> failures(end - begin);
    run_concurrently(begin, end, [&](std::size_t i) {
      if (done[i]) return;
      StageTrace& t = fresh[i - begin];
      t.index = i;
      t.instruction_id = instructions[i].id;
      t.method = config.method;
      try {
        ItemRun item(config, services, snapshot ? &*snapshot : nullptr, reuse);
        item.run(instructions[i], t);
      } catch (...) {
        auto ep = std::current_exception();
        if (is_item_error(ep)) {
          t.status = "error";
          t.error = describe(ep);
          t.response.reset();
          t.candidates.clear();
        } else {
          failures[i - begin] = ep;
        }
      }
    });

    std::exception_ptr stop;
    for (std::size_t i = begin; i < end; ++i) {
      if (done[i]) continue;
      if (failures[i - begin]) {
        stop = failures[i - begin];
        break;
      }
      StageTrace& t = fresh[i - begin];
      if (commit_admissions(t, amr ? services.db : nullptr) > 0) db_dirty = true;
      if (appender) appender->append(encode(t));
      done[i] = std::move(t);
    }
    if (db_dirty) save_db();
    if (stop) std::rethrow_exception(stop);
  }

  PipelineResult result;
  result.resumed = resumed;
  for (auto& t : done) {
    if (t->status != "ok") ++result.errors;
    for (const auto& c : t->candidates) {
      if (c.admission && c.admission->outcome == AdmissionOutcome::admitted) ++result.admitted;
    }
    if (t->response) result.responses.push_back(*t->response);
    result.traces.push_back(std::move(*t));
  }
  if (amr && !config.db_path.empty() && !std::filesystem::exists(config.db_path)) save_db();
  return result;
}

namespace {

std::vector<DistilledResponse> run_method(std::span<const Instruction> instructions,
                                          const PipelineServices& services,
                                          PipelineConfig config, Method method,
                                          const std::map<std::string, DistilledResponse>* reuse) {
  config.method = method;
  return run_pipeline(instructions, config, services, reuse).responses;
}

}  // namespace

std::vector<DistilledResponse> distill_direct(std::span<const Instruction> instructions,
                                              const PipelineServices& services,
                                              PipelineConfig config) {
  return run_method(instructions, services, std::move(config), Method::direct, nullptr);
}

std::vector<DistilledResponse> distill_cot(std::span<const Instruction> instructions,
                                           const PipelineServices& services,
                                           PipelineConfig config) {
  return run_method(instructions, services, std::move(config), Method::cot, nullptr);
}

std::vector<DistilledResponse> distill_ansrepair(std::span<const Instruction> instructions,
                                                 const PipelineServices& services,
                                                 PipelineConfig config) {
  return run_method(instructions, services, std::move(config), Method::ansrepair, nullptr);
}

std::vector<DistilledResponse> distill_amr(
    std::span<const Instruction> instructions, const PipelineServices& services,
    PipelineConfig config, const std::map<std::string, DistilledResponse>* reuse) {
  return run_method(instructions, services, std::move(config), Method::amr, reuse);
}

// ---- seeding ---------------------------------------------------------------

Json encode(const SeedReport& r) {
  Json j;
  j["admitted"] = r.admitted;
  j["duplicate"] = r.duplicate;
  j["rejected"] = r.rejected;
  Json out = Json::array();
  for (const auto& o : r.outcomes) {
    Json e;
    e["module_id"] = o.module_id;
    e["name"] = o.name;
    e["outcome"] = to_string(o.outcome);
    e["nearest"] = encode_match(o.nearest);
    e["status"] = o.verification ? Json(to_string(o.verification->status)) : Json(nullptr);
    e["error"] = o.error;
    out.push_back(std::move(e));
  }
  j["outcomes"] = std::move(out);
  return j;
}

SeedReport seed_module_db(std::span<const FunctionModule> seeds, const PipelineServices& services,
                          const PipelineConfig& config) {
  if (services.db == nullptr || services.embedder == nullptr || services.teacher == nullptr ||
      services.prompts == nullptr || services.executor == nullptr) {
    throw InvalidArgument("seeding needs a database, embedder, teacher, prompts and executor");
  }
  if (config.parallelism == 0) throw InvalidArgument("parallelism must be positive");
  ModuleDatabase& db = *services.db;
  if (services.embedder->dim() != db.dim()) {
    throw DimensionMismatch(db.dim(), services.embedder->dim());
  }

  SeedReport report;
  const std::size_t n = seeds.size();
  for (std::size_t begin = 0; begin < n; begin += config.parallelism) {
    const std::size_t end = std::min(n, begin + config.parallelism);
    const ModuleDatabase snapshot = db;
    std::vector<FunctionModule> mods(seeds.begin() + begin, seeds.begin() + end);
    std::vector<SeedOutcome> outs(end - begin);
    std::vector<std::exception_ptr> failures(end - begin);

    run_concurrently(begin, end, [&](std::size_t i) {
      FunctionModule& m = mods[i - begin];
      SeedOutcome& o = outs[i - begin];
      try {
        if (m.source != ModuleSource::seed) {
          const bool derived = m.module_id.empty() || m.module_id == derive_module_id(m.code, m.source);
          m.source = ModuleSource::seed;
          if (derived) m.module_id = derive_module_id(m.code, m.source);
        }
        ensure_embedding(m, *services.embedder, db.embed_mode());
        o.module_id = m.module_id;
        o.name = m.name;
        o.nearest = snapshot.nearest(*m.embedding);
        if (o.nearest && o.nearest->score >= snapshot.novelty_threshold()) return;
        const std::string question = m.description.empty() ? m.signature : m.description;
        ChatRequest req = services.prompts->render_with_examples(
            TemplateId::test_gen, {{"question", question}, {"answer", fence(m.code, config.guest_tag)}});
        req.model = config.model;
        auto reply = services.teacher->complete_chat(req);
        const std::string tests = extract_primary_solution(reply.content, config.guest_tag);
        if (tests.empty()) {
          VerificationReport r;
          r.subject_id = m.module_id;
          r.status = VerificationStatus::fail;
          r.stderr_tail = "no tests in teacher reply";
          o.verification = r;
        } else {
          o.verification = run_tests(*services.executor, {m.module_id, m.code, tests}, config.limits);
        }
      } catch (...) {
        auto ep = std::current_exception();
        if (is_item_error(ep)) {
          o.error = describe(ep);
        } else {
          failures[i - begin] = ep;
        }
      }
    });

    for (std::size_t i = 0; i < outs.size(); ++i) {
      if (failures[i]) std::rethrow_exception(failures[i]);
      SeedOutcome& o = outs[i];
      if (o.error.empty()) {
        if (o.verification) {
          auto d = db.admit(mods[i], *o.verification);
          o.outcome = d.outcome;
          o.nearest = d.nearest;
        } else {
          o.outcome = AdmissionOutcome::duplicate;
        }
      }
      switch (o.outcome) {
        case AdmissionOutcome::admitted: ++report.admitted; break;
        case AdmissionOutcome::duplicate: ++report.duplicate; break;
        case AdmissionOutcome::rejected_unverified: ++report.rejected; break;
      }
      report.outcomes.push_back(std::move(o));
    }
  }
  return report;
}

// ---- datasets --------------------------------------------------------------

SftEmitReport emit_sft_dataset(std::span<const DistilledResponse> responses,
                               std::span<const Instruction> instructions,
                               const std::filesystem::path& path, bool emit_raw) {
  std::map<std::string, const Instruction*> by_id;
  for (const auto& ins : instructions) by_id[ins.id] = &ins;
  SftEmitReport report;
  std::vector<Json> records;
  for (const auto& r : responses) {
    auto it = by_id.find(r.instruction_id);
    if (it == by_id.end()) {
      throw InvalidArgument("response for unknown instruction " + r.instruction_id);
    }
    if (r.extracted_code.empty()) {
      ++report.excluded;
      continue;
    }
    SftRecord rec;
    rec.instruction = it->second->text;
    rec.response = emit_raw ? r.raw_markdown : r.extracted_code;
    rec.method = r.method;
    rec.provenance = r.provenance;
    rec.provenance["instruction_id"] = r.instruction_id;
    rec.provenance["teacher_model"] = r.teacher_meta.model;
    records.push_back(encode(rec));
    ++report.written;
  }
  write_jsonl(path, make_header("sft"), records);
  return report;
}

std::vector<DistilledResponse> load_responses(const std::filesystem::path& path) {
  return decode_records<DistilledResponse>(read_jsonl(path, "responses"));
}

void save_responses(const std::filesystem::path& path,
                    std::span<const DistilledResponse> responses) {
  std::vector<Json> records;
  records.reserve(responses.size());
  for (const auto& r : responses) records.push_back(encode(r));
  write_jsonl(path, make_header("responses"), records);
}

}  // namespace amrevol
