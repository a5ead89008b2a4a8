#pragma once

// Shared record types and their canonical JSON shapes.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace amrevol {

/// Key order of encoded records is insertion order, which is the documented field order.
using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

enum class Origin { seed, evolved, external };
enum class Method { direct, cot, ansrepair, amr };
enum class ModuleSource { seed, decomposed, evolved };
enum class VerificationStatus { pass, fail, timeout, crash, setup_error };

std::string_view to_string(Origin v) noexcept;
std::string_view to_string(Method v) noexcept;
std::string_view to_string(ModuleSource v) noexcept;
std::string_view to_string(VerificationStatus v) noexcept;

// Throw InvalidArgument on unknown names.
Origin parse_origin(std::string_view s);
Method parse_method(std::string_view s);
ModuleSource parse_module_source(std::string_view s);
VerificationStatus parse_verification_status(std::string_view s);

struct Instruction {
  std::string id;
  std::string text;
  int complexity_level = 1;
  Origin origin = Origin::external;

  bool operator==(const Instruction&) const = default;
};

struct TeacherMeta {
  std::string model;
  double temperature = 0.0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const TeacherMeta&) const = default;
};

struct DistilledResponse {
  std::string instruction_id;
  Method method = Method::direct;
  std::string raw_markdown;
  std::string extracted_code;  // empty when extraction failed
  TeacherMeta teacher_meta;
  std::map<std::string, std::string> provenance;

  bool operator==(const DistilledResponse&) const = default;
};

struct Vector {
  std::vector<double> values;
  bool normalized = false;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const Vector&) const = default;
};

struct VerificationReport {
  std::string subject_id;  // module_id or problem_id
  VerificationStatus status = VerificationStatus::setup_error;
  std::string stdout_tail;
  std::string stderr_tail;
  double duration = 0.0;  // seconds

  bool operator==(const VerificationReport&) const = default;
};

struct FunctionModule {
  std::string module_id;
  std::string name;
  std::string signature;
  std::string description;
  std::string code;
  ModuleSource source = ModuleSource::decomposed;
  std::optional<Vector> embedding;
  bool verified = false;
  std::optional<VerificationReport> verification;

  bool operator==(const FunctionModule&) const = default;
};

struct SftRecord {
  std::string instruction;
  std::string response;
  Method method = Method::direct;
  std::map<std::string, std::string> provenance;

  bool operator==(const SftRecord&) const = default;
};

struct EvalProblem {
  std::string id;
  std::string prompt;
  std::string entry_point;
  std::string tests;
  std::optional<std::string> reference_solution;

  bool operator==(const EvalProblem&) const = default;
};

// Stable ids derived from content, so re-runs produce the same keys.
std::string derive_instruction_id(std::string_view text);
std::string derive_module_id(std::string_view code, ModuleSource source);

bool is_identifier(std::string_view s) noexcept;

// Each returned string is "<field>: <rule>". Empty means valid.
std::vector<std::string> validate(const Instruction& v);
std::vector<std::string> validate(const DistilledResponse& v);
std::vector<std::string> validate(const Vector& v);
std::vector<std::string> validate(const FunctionModule& v);
std::vector<std::string> validate(const SftRecord& v);
std::vector<std::string> validate(const EvalProblem& v);
std::vector<std::string> validate(const VerificationReport& v);

/// Per-record checks plus id uniqueness across the set.
std::vector<std::string> validate_instructions(std::span<const Instruction> set);

Json encode(const Instruction& v);
Json encode(const TeacherMeta& v);
Json encode(const DistilledResponse& v);
Json encode(const Vector& v);
Json encode(const VerificationReport& v);
Json encode(const FunctionModule& v);
Json encode(const SftRecord& v);
Json encode(const EvalProblem& v);

/// decode<T> throws InvalidArgument when required fields are missing or mistyped.
template <class T>
T decode(const Json& j);

template <> Instruction decode<Instruction>(const Json& j);
template <> TeacherMeta decode<TeacherMeta>(const Json& j);
template <> DistilledResponse decode<DistilledResponse>(const Json& j);
template <> Vector decode<Vector>(const Json& j);
template <> VerificationReport decode<VerificationReport>(const Json& j);
template <> FunctionModule decode<FunctionModule>(const Json& j);
template <> SftRecord decode<SftRecord>(const Json& j);
template <> EvalProblem decode<EvalProblem>(const Json& j);

}  // namespace amrevol
