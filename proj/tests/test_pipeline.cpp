#include <gtest/gtest.h>

#include "amrevol/error.hpp"
#include "amrevol/jsonl.hpp"
#include "amrevol/pipeline.hpp"
#include "fake_transport.hpp"
#include "test_support.hpp"

using namespace amrevol;
using amrevol::testing::read_file;
using amrevol::testing::TempDir;

namespace {

using amrevol::testing::FnTransport;

bool contains(const std::string& s, std::string_view part) { return s.find(part) != std::string::npos; }

std::string py(const std::string& code) { return "```python\n" + code + "\n```"; }

Instruction ins(std::string text) {
  auto id = derive_instruction_id(text);
  return {id, std::move(text), 1, Origin::external};
}

GatewayOptions no_sleep() {
  GatewayOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  return o;
}

struct Rig {
  explicit Rig(FnTransport::Fn fn, std::vector<StubRule> rules = {{"", VerificationStatus::pass}})
      : teacher(std::make_shared<FnTransport>(std::move(fn)), no_sleep()), executor(std::move(rules)) {}

  PipelineServices services() { return {&teacher, &prompts, &executor, &embedder, &db}; }

  TeacherGateway teacher;
  PromptLibrary prompts;
  StubExecutor executor;
  LocalHashEmbedder embedder{256};
  ModuleDatabase db{256};
};

FunctionModule seed(const std::string& code) {
  auto m = decode<FunctionModule>(Json{{"code", code}, {"source", "seed"}});
  return m;
}

void admit_verified(ModuleDatabase& db, const EmbeddingProvider& e, FunctionModule m) {
  ensure_embedding(m, e, db.embed_mode());
  auto d = db.admit(m, {m.module_id, VerificationStatus::pass, "", "", 0.0});
  ASSERT_EQ(d.outcome, AdmissionOutcome::admitted);
}

}  // namespace

// ---- direct / cot ----------------------------------------------------------

TEST(Direct, TwoInstructionsTwoResponses) {
  Rig rig([](const ChatRequest& r) { return "Sure:\n" + py("def f():\n    return '" + r.user + "'"); });
  std::vector<Instruction> items{ins("Write a."), ins("Write b.")};
  auto out = distill_direct(items, rig.services());
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].instruction_id, items[0].id);
  EXPECT_EQ(out[1].extracted_code, "def f():\n    return 'Write b.'");
  EXPECT_EQ(out[0].method, Method::direct);
  EXPECT_EQ(out[0].teacher_meta.model, "gpt-3.5-turbo-1106");
  EXPECT_EQ(out[0].teacher_meta.temperature, 0.0);
  EXPECT_GT(out[0].teacher_meta.completion_tokens, 0);
  EXPECT_TRUE(validate(out[0]).empty());
  EXPECT_EQ(rig.teacher.stats().calls, 2u);
}

TEST(Direct, ProseReplyIsFlagged) {
  Rig rig([](const ChatRequest&) { return std::string("I would rather explain it in words."); });
  std::vector<Instruction> items{ins("Write a.")};
  auto out = distill_direct(items, rig.services());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].extracted_code, "");
  EXPECT_EQ(out[0].provenance.at("extraction"), "failed");
}

TEST(Direct, EmptyInstructionList) {
  Rig rig([](const ChatRequest&) { return std::string(); });
  EXPECT_TRUE(distill_direct({}, rig.services()).empty());
  EXPECT_TRUE(distill_cot({}, rig.services()).empty());
}

TEST(Direct, BudgetStopsRunAndCheckpointHoldsTen) {
  TempDir dir;
  Rig rig([](const ChatRequest&) { return py("x = 1"); });
  std::vector<Instruction> items;
  for (int i = 0; i < 100; ++i) items.push_back(ins("Task " + std::to_string(i)));
  auto limited = rig.teacher.with_budget(10);
  auto services = rig.services();
  services.teacher = &limited;
  PipelineConfig cfg;
  cfg.parallelism = 1;
  cfg.checkpoint = dir / "trace.jsonl";
  EXPECT_THROW(run_pipeline(items, cfg, services), BudgetExceeded);
  EXPECT_EQ(load_trace(cfg.checkpoint).size(), 10u);

  // The resumed run skips the finished ten.
  auto result = run_pipeline(items, cfg, rig.services());
  EXPECT_EQ(result.resumed, 10u);
  EXPECT_EQ(result.responses.size(), 100u);
  EXPECT_EQ(rig.teacher.stats().calls, 100u);
}

TEST(Direct, TransportFailureSkipsOnlyThatItem) {
  Rig rig([](const ChatRequest& r) -> std::string {
    if (contains(r.user, "bad")) throw RequestInvalid("rejected");
    return py("x = 1");
  });
  std::vector<Instruction> items{ins("good 1"), ins("bad"), ins("good 2")};
  PipelineConfig cfg;
  auto result = run_pipeline(items, cfg, rig.services());
  EXPECT_EQ(result.errors, 1u);
  EXPECT_EQ(result.responses.size(), 2u);
  EXPECT_EQ(result.traces[1].status, "error");
  EXPECT_TRUE(contains(result.traces[1].error, "rejected"));
}

TEST(Direct, AuthErrorStopsRun) {
  Rig rig([](const ChatRequest&) -> std::string { throw AuthError("no key"); });
  std::vector<Instruction> items{ins("a")};
  EXPECT_THROW(distill_direct(items, rig.services()), AuthError);
}

TEST(Cot, ExtractsFinalCodeKeepsReasoning) {
  Rig rig([](const ChatRequest& r) {
    EXPECT_TRUE(contains(r.user, "## New Task\n### Python Question:\nAdd.\n"));
    return "First think about it.\n\n" + py("def add(a, b):\n    return a + b");
  });
  std::vector<Instruction> items{ins("Add.")};
  auto out = distill_cot(items, rig.services());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].method, Method::cot);
  EXPECT_EQ(out[0].extracted_code, "def add(a, b):\n    return a + b");
  EXPECT_TRUE(contains(out[0].raw_markdown, "First think about it."));
}

TEST(Cot, TwoBlocksConcatenated) {
  Rig rig([](const ChatRequest&) { return py("a = 1") + "\nthen\n" + py("b = 2"); });
  std::vector<Instruction> items{ins("Q")};
  EXPECT_EQ(distill_cot(items, rig.services())[0].extracted_code, "a = 1\n\nb = 2");
}

// ---- ansrepair ---------------------------------------------------------------

namespace {

std::string ansrepair_teacher(const ChatRequest& r) {
  if (contains(r.user, "### Possible Code Solution:")) return py("def test_f():\n    assert f() == 1");
  if (contains(r.user, "### Wrong Solution:")) return py("def f():\n    return 1  # fixed");
  return py("def f():\n    return 0  # first");
}

}  // namespace

TEST(AnsRepair, PassNeedsTwoCalls) {
  Rig rig(ansrepair_teacher);
  std::vector<Instruction> items{ins("Return one.")};
  auto out = distill_ansrepair(items, rig.services());
  EXPECT_EQ(rig.teacher.stats().calls, 2u);
  EXPECT_EQ(out[0].provenance.at("verdict"), "pass");
  EXPECT_EQ(out[0].provenance.at("repair_rounds"), "0");
  EXPECT_EQ(out[0].method, Method::ansrepair);
}

TEST(AnsRepair, FailThenPassNeedsThreeCalls) {
  Rig rig(ansrepair_teacher, {{"# first", VerificationStatus::fail}, {"", VerificationStatus::pass}});
  std::vector<Instruction> items{ins("Return one.")};
  PipelineConfig cfg;
  cfg.method = Method::ansrepair;
  auto result = run_pipeline(items, cfg, rig.services());
  EXPECT_EQ(rig.teacher.stats().calls, 3u);
  const auto& t = result.traces[0];
  ASSERT_EQ(t.calls.size(), 3u);
  EXPECT_EQ(t.calls[0].stage, "direct");
  EXPECT_EQ(t.calls[1].stage, "test_gen");
  EXPECT_EQ(t.calls[2].stage, "repair[0]");
  ASSERT_EQ(t.verifications.size(), 2u);
  EXPECT_EQ(t.verifications[1].status, VerificationStatus::pass);
  EXPECT_EQ(result.responses[0].provenance.at("verdict"), "pass");
  EXPECT_TRUE(contains(result.responses[0].extracted_code, "# fixed"));
  EXPECT_EQ(rig.executor.runs(), 2u);
}

TEST(AnsRepair, RegeneratedTestsAddACallPerRound) {
  Rig rig(ansrepair_teacher, {{"# first", VerificationStatus::fail}, {"", VerificationStatus::pass}});
  std::vector<Instruction> items{ins("Return one.")};
  PipelineConfig cfg;
  cfg.regenerate_tests = true;
  distill_ansrepair(items, rig.services(), cfg);
  EXPECT_EQ(rig.teacher.stats().calls, 4u);
}

TEST(AnsRepair, AlwaysFailStillEmits) {
  Rig rig(ansrepair_teacher, {{"", VerificationStatus::fail}});
  std::vector<Instruction> items{ins("Return one.")};
  PipelineConfig cfg;
  cfg.repair_rounds = 2;
  auto out = distill_ansrepair(items, rig.services(), cfg);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].provenance.at("verdict"), "fail");
  EXPECT_EQ(out[0].provenance.at("repair_rounds"), "2");
  EXPECT_EQ(rig.teacher.stats().calls, 4u);
}

// ---- amr ---------------------------------------------------------------------

namespace {

const std::string kEvenSquares =
    "Write a function even_squares(numbers) returning the squares of the even numbers.";

std::string amr_teacher(const ChatRequest& r, const std::string& evolved) {
  if (r.user == kEvenSquares) return py("def even_squares(numbers):\n    return [n * n for n in numbers if n % 2 == 0]");
  if (contains(r.user, "### Possible Code Solution:")) {
    return py("def test_even_squares():\n    assert even_squares([1, 2, 3, 4]) == [4, 16]");
  }
  if (contains(r.user, "### Potential Solution:")) {
    return py("def is_even(n):\n    \"\"\"Whether n is even.\"\"\"\n    return n % 2 == 0\n\n\n"
              "def square(x):\n    \"\"\"x times x.\"\"\"\n    return x * x");
  }
  if (contains(r.user, "### Relevant Functions:")) return evolved;
  throw RequestInvalid("unexpected request");
}

const std::string kEvolved = "Refined:\n" + py(
    "def even_squares(numbers):\n    \"\"\"Squares of the even numbers, in order.\"\"\"\n"
    "    out = []\n    for n in numbers:\n        if n % 2 == 0:\n            out.append(n * n)\n"
    "    return out");

}  // namespace

TEST(Amr, EndToEndOneNovelModule) {
  std::vector<std::string> are_prompts;
  Rig rig([&](const ChatRequest& r) {
    if (contains(r.user, "### Relevant Functions:")) are_prompts.push_back(r.user);
    return amr_teacher(r, kEvolved);
  });
  admit_verified(rig.db, rig.embedder,
                 seed("def is_even(n):\n    \"\"\"Return True if n is even.\"\"\"\n    return n % 2 == 0\n"));
  std::vector<Instruction> items{ins(kEvenSquares)};
  PipelineConfig cfg;
  cfg.method = Method::amr;
  auto result = run_pipeline(items, cfg, rig.services());

  ASSERT_EQ(result.responses.size(), 1u);
  EXPECT_EQ(result.responses[0].method, Method::amr);
  EXPECT_TRUE(contains(result.responses[0].extracted_code, "out.append(n * n)"));
  EXPECT_EQ(rig.db.size(), 2u);
  EXPECT_EQ(result.admitted, 1u);

  const auto& t = result.traces[0];
  ASSERT_EQ(t.calls.size(), 4u);
  EXPECT_EQ(t.calls[0].stage, "direct");
  EXPECT_EQ(t.calls[1].stage, "decomposition");
  EXPECT_EQ(t.calls[2].stage, "evolution");
  EXPECT_EQ(t.calls[3].stage.rfind("test_gen:m-", 0), 0u);
  EXPECT_EQ(t.decomposed.size(), 2u);
  ASSERT_EQ(t.retrieved.size(), 1u);
  EXPECT_EQ(t.retrieved[0], rig.db.entries()[0].module_id);
  ASSERT_EQ(t.candidates.size(), 1u);
  EXPECT_TRUE(t.candidates[0].novel);
  EXPECT_EQ(t.candidates[0].admission->outcome, AdmissionOutcome::admitted);
  EXPECT_EQ(t.candidates[0].module.source, ModuleSource::evolved);

  // Decomposed modules first, then the retrieved one.
  ASSERT_EQ(are_prompts.size(), 1u);
  const auto& p = are_prompts[0];
  const auto dec = p.find("def square(x):");
  const auto ret = p.find("Return True if n is even.");
  ASSERT_NE(dec, std::string::npos);
  ASSERT_NE(ret, std::string::npos);
  EXPECT_LT(dec, ret);

  auto stored = rig.db.entries()[1];
  EXPECT_EQ(stored.name, "even_squares");
  EXPECT_TRUE(stored.verified);
  EXPECT_TRUE(validate(stored).empty());
}

TEST(Amr, RetrievedOnlyContext) {
  std::string are;
  Rig rig([&](const ChatRequest& r) {
    if (contains(r.user, "### Relevant Functions:")) are = r.user;
    return amr_teacher(r, kEvolved);
  });
  admit_verified(rig.db, rig.embedder, seed("def is_even(n):\n    return n % 2 == 0\n"));
  std::vector<Instruction> items{ins(kEvenSquares)};
  PipelineConfig cfg;
  cfg.include_decomposed = false;
  distill_amr(items, rig.services(), cfg);
  EXPECT_EQ(are.find("def square(x):"), std::string::npos);
  EXPECT_NE(are.find("def is_even(n):\n    return n % 2 == 0"), std::string::npos);
}

TEST(Amr, EmptyDatabaseRendersNone) {
  std::string are;
  Rig rig([&](const ChatRequest& r) {
    if (contains(r.user, "### Relevant Functions:")) are = r.user;
    return amr_teacher(r, kEvolved);
  });
  std::vector<Instruction> items{ins(kEvenSquares)};
  auto out = distill_amr(items, rig.services());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(contains(are, "### Relevant Functions:\nNone\n"));
}

TEST(Amr, FailingNovelModuleLeavesDatabaseUnchanged) {
  Rig rig([](const ChatRequest& r) { return amr_teacher(r, kEvolved); },
          {{"", VerificationStatus::fail}});
  admit_verified(rig.db, rig.embedder, seed("def is_even(n):\n    return n % 2 == 0\n"));
  std::vector<Instruction> items{ins(kEvenSquares)};
  PipelineConfig cfg;
  cfg.method = Method::amr;
  auto result = run_pipeline(items, cfg, rig.services());
  EXPECT_EQ(result.responses.size(), 1u);
  EXPECT_EQ(rig.db.size(), 1u);
  EXPECT_EQ(result.traces[0].candidates[0].admission->outcome, AdmissionOutcome::rejected_unverified);
  EXPECT_FALSE(result.traces[0].candidates[0].module.embedding.has_value());
}

TEST(Amr, KnownModuleIsNotRetested) {
  const std::string known = "def is_even(n):\n    return n % 2 == 0";
  Rig rig([&](const ChatRequest& r) { return amr_teacher(r, py(known)); });
  admit_verified(rig.db, rig.embedder, seed(known));
  std::vector<Instruction> items{ins(kEvenSquares)};
  PipelineConfig cfg;
  cfg.method = Method::amr;
  auto result = run_pipeline(items, cfg, rig.services());
  EXPECT_EQ(rig.teacher.stats().calls, 3u);
  ASSERT_EQ(result.traces[0].candidates.size(), 1u);
  EXPECT_FALSE(result.traces[0].candidates[0].novel);
  EXPECT_NEAR(result.traces[0].candidates[0].nearest->score, 1.0, 1e-12);
}

TEST(Amr, UnparsableDecompositionFallsBackToWholeAnswer) {
  Rig rig([](const ChatRequest& r) -> std::string {
    if (contains(r.user, "### Potential Solution:")) return "It is already minimal.";
    return amr_teacher(r, kEvolved);
  });
  std::vector<Instruction> items{ins(kEvenSquares)};
  PipelineConfig cfg;
  cfg.method = Method::amr;
  auto result = run_pipeline(items, cfg, rig.services());
  const auto& t = result.traces[0];
  EXPECT_TRUE(t.decomposition_fallback);
  ASSERT_EQ(t.decomposed.size(), 1u);
  EXPECT_EQ(result.responses[0].provenance.at("decomposition"), "fallback");
  EXPECT_EQ(t.status, "ok");
}

TEST(Amr, ReusesProvidedDirectResponse) {
  Rig rig([](const ChatRequest& r) { return amr_teacher(r, kEvolved); });
  std::vector<Instruction> items{ins(kEvenSquares)};
  DistilledResponse rd;
  rd.instruction_id = items[0].id;
  rd.raw_markdown = py("def even_squares(numbers):\n    return []");
  rd.extracted_code = "def even_squares(numbers):\n    return []";
  std::map<std::string, DistilledResponse> reuse{{rd.instruction_id, rd}};
  PipelineConfig cfg;
  cfg.method = Method::amr;
  auto result = run_pipeline(items, cfg, rig.services(), &reuse);
  EXPECT_TRUE(result.traces[0].rd_reused);
  EXPECT_EQ(result.traces[0].calls[0].stage, "decomposition");
  EXPECT_EQ(result.responses[0].provenance.at("rd"), "reused");
}

TEST(Amr, NeedsDatabaseAndMatchingDims) {
  Rig rig([](const ChatRequest& r) { return amr_teacher(r, kEvolved); });
  std::vector<Instruction> items{ins(kEvenSquares)};
  auto services = rig.services();
  PipelineConfig cfg;
  cfg.method = Method::amr;
  services.db = nullptr;
  EXPECT_THROW(run_pipeline(items, cfg, services), InvalidArgument);
  ModuleDatabase small(8);
  services.db = &small;
  EXPECT_THROW(run_pipeline(items, cfg, services), DimensionMismatch);
  EXPECT_FALSE(validate(cfg).empty());
}

// ---- fixture runs -----------------------------------------------------------

namespace {

struct FixtureRun {
  std::vector<Instruction> instructions;
  TempDir dir;

  FixtureRun() {
    const auto src = amrevol::testing::fixture_dir("amr5");
    instructions = load_instructions(src / "instructions.jsonl");
    std::filesystem::copy_file(src / "modules.jsonl", dir / "modules.jsonl");
  }

  /// One process lifetime: load the db, run, return the number of calls made.
  std::uint64_t run(std::size_t parallelism, std::optional<std::uint64_t> budget = std::nullopt) {
    const auto src = amrevol::testing::fixture_dir("amr5");
    TeacherGateway teacher(std::make_shared<ScriptedTeacher>(load_mock_script(src / "mock.jsonl")), no_sleep());
    auto gateway = budget ? teacher.with_budget(*budget) : teacher;
    PromptLibrary prompts;
    StubExecutor executor(load_stub_script(src / "stub.jsonl"));
    LocalHashEmbedder embedder(256);
    auto db = ModuleDatabase::load(dir / "modules.jsonl");
    PipelineConfig cfg;
    cfg.method = Method::amr;
    cfg.parallelism = parallelism;
    cfg.db_path = dir / "modules.jsonl";
    cfg.checkpoint = dir / "trace.jsonl";
    PipelineServices services{&gateway, &prompts, &executor, &embedder, &db};
    try {
      last = run_pipeline(instructions, cfg, services);
    } catch (const BudgetExceeded&) {
      stopped = true;
    }
    return teacher.stats().calls;
  }

  std::optional<PipelineResult> last;
  bool stopped = false;
};

}  // namespace

TEST(AmrFixture, CallAccountingPerInstruction) {
  FixtureRun f;
  f.run(4);
  ASSERT_TRUE(f.last);
  EXPECT_EQ(f.last->errors, 0u);
  std::vector<std::size_t> calls, novel;
  for (const auto& t : f.last->traces) {
    calls.push_back(t.calls.size());
    std::size_t n = 0;
    for (const auto& c : t.candidates) n += c.novel ? 1 : 0;
    novel.push_back(n);
    EXPECT_EQ(t.calls.size(), 3 + n);
  }
  EXPECT_EQ(calls, (std::vector<std::size_t>{3, 4, 3, 4, 4}));
  EXPECT_EQ(f.last->admitted, 2u);
  EXPECT_TRUE(f.last->traces[4].decomposition_fallback);
}

TEST(AmrFixture, ResumeAfterAnyInterruptionIsByteIdentical) {
  FixtureRun reference;
  reference.run(2);
  const auto want_trace = read_file(reference.dir / "trace.jsonl");
  const auto want_db = read_file(reference.dir / "modules.jsonl");
  for (std::uint64_t budget = 1; budget < 18; ++budget) {
    SCOPED_TRACE("budget " + std::to_string(budget));
    FixtureRun f;
    f.run(2, budget);
    ASSERT_TRUE(f.stopped);
    f.run(2);
    ASSERT_TRUE(f.last);
    EXPECT_EQ(read_file(f.dir / "trace.jsonl"), want_trace);
    EXPECT_EQ(read_file(f.dir / "modules.jsonl"), want_db);
  }
}

TEST(AmrFixture, TornTraceAppendIsRedone) {
  FixtureRun reference;
  reference.run(1);
  const auto want = read_file(reference.dir / "trace.jsonl");
  // Items 0 and 1 use seven calls; item 2 is torn halfway through its line.
  FixtureRun f;
  f.run(1, 7);
  auto text = read_file(f.dir / "trace.jsonl");
  const auto start = text.size();
  ASSERT_EQ(want.substr(0, start), text);
  const auto line_end = want.find('\n', start);
  amrevol::testing::write_file(f.dir / "trace.jsonl", text + want.substr(start, (line_end - start) / 2));
  f.run(1);
  EXPECT_EQ(read_file(f.dir / "trace.jsonl"), want);
  EXPECT_EQ(read_file(f.dir / "modules.jsonl"), read_file(reference.dir / "modules.jsonl"));
}

TEST(AmrFixture, ResumeWithOtherParallelismRefused) {
  FixtureRun f;
  f.run(2, 5);
  EXPECT_THROW(f.run(3), InvalidArgument);
}

// ---- seeding -----------------------------------------------------------------

namespace {

std::string seed_tests(const ChatRequest& r) {
  for (std::string name : {"alpha", "beta", "gamma"}) {
    if (contains(r.user, "def " + name + "(")) return py("def test_" + name + "():\n    assert " + name + "() == 1");
  }
  return std::string("no tests");
}

}  // namespace

TEST(Seed, PassFailPassAdmitsTwo) {
  Rig rig(seed_tests, {{"beta", VerificationStatus::fail}, {"", VerificationStatus::pass}});
  std::vector<FunctionModule> seeds{seed("def alpha():\n    return 1\n"),
                                    seed("def beta():\n    return 'completely different body'\n"),
                                    seed("def gamma():\n    x = [i for i in range(10)]\n    return 1\n")};
  auto report = seed_module_db(seeds, rig.services());
  EXPECT_EQ(rig.db.size(), 2u);
  EXPECT_EQ(report.admitted, 2u);
  EXPECT_EQ(report.rejected, 1u);
  EXPECT_EQ(report.outcomes[1].outcome, AdmissionOutcome::rejected_unverified);
  for (const auto& m : rig.db.entries()) {
    EXPECT_EQ(m.source, ModuleSource::seed);
    EXPECT_TRUE(validate(m).empty());
  }
}

TEST(Seed, NoSeedsGivesEmptyDatabaseFile) {
  TempDir dir;
  Rig rig(seed_tests);
  auto report = seed_module_db({}, rig.services());
  EXPECT_EQ(report.admitted, 0u);
  rig.db.save(dir / "m.jsonl");
  auto back = ModuleDatabase::load(dir / "m.jsonl");
  EXPECT_TRUE(back.empty());
  EXPECT_EQ(back.dim(), 256u);
}

TEST(Seed, DuplicatePairKeepsOne) {
  for (std::size_t p : {1u, 4u}) {
    Rig rig(seed_tests);
    std::vector<FunctionModule> seeds{seed("def alpha():\n    return 1\n"), seed("def alpha():\n    return 1\n")};
    PipelineConfig cfg;
    cfg.parallelism = p;
    auto report = seed_module_db(seeds, rig.services(), cfg);
    EXPECT_EQ(rig.db.size(), 1u);
    EXPECT_EQ(report.duplicate, 1u);
    EXPECT_EQ(report.outcomes[1].outcome, AdmissionOutcome::duplicate);
  }
}

TEST(Seed, MissingTestsRejected) {
  Rig rig(seed_tests);
  std::vector<FunctionModule> seeds{seed("def delta():\n    return 4\n")};
  auto report = seed_module_db(seeds, rig.services());
  EXPECT_EQ(report.rejected, 1u);
  EXPECT_EQ(report.outcomes[0].verification->stderr_tail, "no tests in teacher reply");
}

// ---- sft emission ------------------------------------------------------------

TEST(Sft, ExcludesFailedExtraction) {
  TempDir dir;
  std::vector<Instruction> items{ins("A"), ins("B"), ins("C")};
  std::vector<DistilledResponse> rs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    rs[i].instruction_id = items[i].id;
    rs[i].method = Method::amr;
    rs[i].raw_markdown = "Answer\n" + py("x = " + std::to_string(i));
    rs[i].extracted_code = "x = " + std::to_string(i);
    rs[i].teacher_meta.model = "t";
  }
  rs[1].extracted_code.clear();
  auto report = emit_sft_dataset(rs, items, dir / "sft.jsonl");
  EXPECT_EQ(report.written, 2u);
  EXPECT_EQ(report.excluded, 1u);
  auto recs = decode_records<SftRecord>(read_jsonl(dir / "sft.jsonl", "sft"));
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].instruction, "A");
  EXPECT_EQ(recs[0].response, rs[0].raw_markdown);
  EXPECT_EQ(recs[1].provenance.at("instruction_id"), items[2].id);
  EXPECT_EQ(recs[1].provenance.at("teacher_model"), "t");

  emit_sft_dataset(rs, items, dir / "code.jsonl", false);
  auto code = decode_records<SftRecord>(read_jsonl(dir / "code.jsonl", "sft"));
  EXPECT_EQ(code[0].response, "x = 0");

  emit_sft_dataset(rs, items, dir / "again.jsonl");
  EXPECT_EQ(read_file(dir / "sft.jsonl"), read_file(dir / "again.jsonl"));

  std::vector<Instruction> missing{items[0]};
  EXPECT_THROW(emit_sft_dataset(rs, missing, dir / "x.jsonl"), InvalidArgument);
}

TEST(Sft, ResponsesRoundTrip) {
  TempDir dir;
  DistilledResponse r;
  r.instruction_id = "i-1";
  r.method = Method::cot;
  r.raw_markdown = py("y = 2");
  r.extracted_code = "y = 2";
  save_responses(dir / "r.jsonl", std::vector{r});
  EXPECT_EQ(load_responses(dir / "r.jsonl"), std::vector{r});
}

TEST(Trace, EncodeDecodeRoundTrip) {
  FixtureRun f;
  f.run(3);
  for (const auto& t : f.last->traces) {
    auto back = decode_stage_trace(Json::parse(encode(t).dump()));
    EXPECT_EQ(encode(back).dump(), encode(t).dump());
  }
}
