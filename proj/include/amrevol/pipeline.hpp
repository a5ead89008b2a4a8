#pragma once

// Distillation methods (direct, CoT, AnsRepair, AMR), module database seeding
// and SFT dataset emission.
//
// Instructions are processed in windows of `parallelism` items aligned to the
// absolute instruction index. Items of a window run concurrently against the
// database as it stood when the window opened; their admissions are applied in
// instruction order when the window closes. Each finished item is appended to
// the trace file, which doubles as the checkpoint: a restarted run skips the
// items it holds and produces the same outputs as an uninterrupted one.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amrevol/domain.hpp"
#include "amrevol/embedding.hpp"
#include "amrevol/module_db.hpp"
#include "amrevol/prompts.hpp"
#include "amrevol/sandbox.hpp"
#include "amrevol/teacher.hpp"

namespace amrevol {

struct PipelineConfig {
  Method method = Method::direct;
  std::string guest_tag = "python";
  std::string model;  // teacher model; empty uses the gateway default
  std::size_t k_per_module = 1;
  std::size_t cap = 5;
  int repair_rounds = 1;
  bool regenerate_tests = false;
  bool include_decomposed = true;
  std::size_t parallelism = 4;
  ExecutionLimits limits;
  bool emit_raw = true;               // sft response = raw markdown, else extracted code
  std::filesystem::path db_path;      // amr: updated database is saved here per window
  std::filesystem::path checkpoint;   // trace.jsonl; empty keeps the trace in memory
};

/// "<field>: <rule>" strings; empty means usable.
std::vector<std::string> validate(const PipelineConfig& config);

/// What the pipeline talks to. Only what the method needs must be set:
/// teacher and prompts always, executor for ansrepair/amr/seeding,
/// embedder and db for amr/seeding.
struct PipelineServices {
  const TeacherGateway* teacher = nullptr;
  const PromptLibrary* prompts = nullptr;
  Executor* executor = nullptr;
  const EmbeddingProvider* embedder = nullptr;
  ModuleDatabase* db = nullptr;
};

struct TeacherCall {
  std::string stage;  // e.g. "direct", "repair[0]", "test_gen:<module_id>"
  TemplateId template_id = TemplateId::direct;
  std::string user_prompt;
  std::string reply;
  FinishReason finish_reason = FinishReason::stop;
  TokenUsage usage;
};

struct CandidateTrace {
  FunctionModule module;  // embedding kept only when admitted
  bool novel = false;     // against the window's snapshot
  std::optional<ScoredMatch> nearest;
  std::string tests;
  std::optional<VerificationReport> verification;
  std::optional<AdmissionDecision> admission;
};

/// Everything that happened to one instruction.
struct StageTrace {
  std::size_t index = 0;
  std::string instruction_id;
  Method method = Method::direct;
  std::string status = "ok";  // "ok" or "error"
  std::string error;
  std::vector<TeacherCall> calls;
  std::vector<VerificationReport> verifications;  // ansrepair rounds, in order
  bool rd_reused = false;
  bool decomposition_fallback = false;
  std::vector<std::string> decomposed;  // module ids
  std::vector<std::string> retrieved;   // module ids
  std::vector<CandidateTrace> candidates;
  std::optional<DistilledResponse> response;
};

Json encode(const TeacherCall& c);
Json encode(const CandidateTrace& c);
Json encode(const StageTrace& t);
StageTrace decode_stage_trace(const Json& j);

struct PipelineResult {
  std::vector<StageTrace> traces;              // index order, resumed items included
  std::vector<DistilledResponse> responses;    // successful items, index order
  std::size_t resumed = 0;                     // items taken from the checkpoint
  std::size_t errors = 0;                      // items recorded with status "error"
  std::size_t admitted = 0;                    // modules admitted over the whole trace
};

/// Runs `config.method` over `instructions`. Per-item teacher/transport
/// failures are recorded in the trace and the item is skipped. BudgetExceeded,
/// AuthError and configuration errors stop the run after the finished prefix of
/// the current window is committed. `reuse` maps instruction ids to direct
/// responses that AMR consumes instead of distilling R_d again.
PipelineResult run_pipeline(std::span<const Instruction> instructions,
                            const PipelineConfig& config, const PipelineServices& services,
                            const std::map<std::string, DistilledResponse>* reuse = nullptr);

std::vector<DistilledResponse> distill_direct(std::span<const Instruction> instructions,
                                              const PipelineServices& services,
                                              PipelineConfig config = {});
std::vector<DistilledResponse> distill_cot(std::span<const Instruction> instructions,
                                           const PipelineServices& services,
                                           PipelineConfig config = {});
std::vector<DistilledResponse> distill_ansrepair(std::span<const Instruction> instructions,
                                                 const PipelineServices& services,
                                                 PipelineConfig config = {});
std::vector<DistilledResponse> distill_amr(
    std::span<const Instruction> instructions, const PipelineServices& services,
    PipelineConfig config = {},
    const std::map<std::string, DistilledResponse>* reuse = nullptr);

struct SeedOutcome {
  std::string module_id;
  std::string name;
  AdmissionOutcome outcome = AdmissionOutcome::rejected_unverified;
  std::optional<ScoredMatch> nearest;
  std::optional<VerificationReport> verification;
  std::string error;  // teacher failure; outcome stays rejected_unverified
};

struct SeedReport {
  std::size_t admitted = 0;
  std::size_t duplicate = 0;
  std::size_t rejected = 0;
  std::vector<SeedOutcome> outcomes;  // seed order
};

Json encode(const SeedReport& r);

/// For each seed: test_gen on its description and code, run_tests, admit on
/// pass. Seeds already covered by the database skip the teacher call and are
/// reported as duplicates. Admits into `*services.db`.
SeedReport seed_module_db(std::span<const FunctionModule> seeds, const PipelineServices& services,
                          const PipelineConfig& config = {});

struct SftEmitReport {
  std::size_t written = 0;
  std::size_t excluded = 0;  // responses with empty extracted_code
};

/// Writes sft.jsonl. Responses whose instruction is not in `instructions`
/// raise InvalidArgument.
SftEmitReport emit_sft_dataset(std::span<const DistilledResponse> responses,
                               std::span<const Instruction> instructions,
                               const std::filesystem::path& path, bool emit_raw = true);

std::vector<DistilledResponse> load_responses(const std::filesystem::path& path);
void save_responses(const std::filesystem::path& path,
                    std::span<const DistilledResponse> responses);

/// Reads a trace file. A truncated final line (interrupted append) is dropped.
std::vector<StageTrace> load_trace(const std::filesystem::path& path);

}  // namespace amrevol
