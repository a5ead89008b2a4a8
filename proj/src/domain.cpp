#include "amrevol/domain.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <set>

#include "amrevol/error.hpp"
#include "amrevol/hash.hpp"
#include "amrevol/parser.hpp"

namespace amrevol {

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<std::string_view, E>, N>& table,
             std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw InvalidArgument("unknown " + std::string(what) + ": '" + std::string(s) + "'");
}

constexpr std::array<std::pair<std::string_view, Origin>, 3> kOrigins{{
    {"seed", Origin::seed}, {"evolved", Origin::evolved}, {"external", Origin::external}}};
constexpr std::array<std::pair<std::string_view, Method>, 4> kMethods{{
    {"direct", Method::direct}, {"cot", Method::cot}, {"ansrepair", Method::ansrepair},
    {"amr", Method::amr}}};
constexpr std::array<std::pair<std::string_view, ModuleSource>, 3> kSources{{
    {"seed", ModuleSource::seed}, {"decomposed", ModuleSource::decomposed},
    {"evolved", ModuleSource::evolved}}};
constexpr std::array<std::pair<std::string_view, VerificationStatus>, 5> kStatuses{{
    {"pass", VerificationStatus::pass}, {"fail", VerificationStatus::fail},
    {"timeout", VerificationStatus::timeout}, {"crash", VerificationStatus::crash},
    {"setup_error", VerificationStatus::setup_error}}};

template <class E, std::size_t N>
std::string_view name_of(E v, const std::array<std::pair<std::string_view, E>, N>& table) noexcept {
  for (const auto& [name, value] : table) {
    if (value == v) return name;
  }
  return "?";
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) throw InvalidArgument("record is not a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw InvalidArgument(std::string("missing field: ") + key);
  return *it;
}

std::string get_string(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_string()) throw InvalidArgument(std::string("field is not a string: ") + key);
  return v.get<std::string>();
}

std::string get_string_or(const Json& j, const char* key, std::string fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw InvalidArgument(std::string("field is not a string: ") + key);
  return it->get<std::string>();
}

std::map<std::string, std::string> get_string_map(const Json& j, const char* key) {
  std::map<std::string, std::string> out;
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return out;
  if (!it->is_object()) throw InvalidArgument(std::string("field is not an object: ") + key);
  for (auto kv = it->begin(); kv != it->end(); ++kv) {
    if (!kv.value().is_string()) {
      throw InvalidArgument(std::string("map value is not a string: ") + key + "." + kv.key());
    }
    out.emplace(kv.key(), kv.value().get<std::string>());
  }
  return out;
}

Json encode_map(const std::map<std::string, std::string>& m) {
  Json out = Json::object();
  for (const auto& [k, v] : m) out[k] = v;
  return out;
}

/// True when `code` is the in-order concatenation of some block bodies joined by blank lines.
bool is_block_reassembly(std::string_view code, std::string_view markdown) {
  std::size_t pos = 0;
  for (const auto& block : extract_code_blocks(markdown)) {
    if (pos == code.size()) break;
    std::string_view rest = code.substr(pos);
    if (rest.starts_with(block.body)) {
      std::size_t after = pos + block.body.size();
      if (after == code.size()) return true;
      if (code.substr(after).starts_with("\n\n")) pos = after + 2;
    }
  }
  return pos == code.size();
}

}  // namespace

std::string_view to_string(Origin v) noexcept { return name_of(v, kOrigins); }
std::string_view to_string(Method v) noexcept { return name_of(v, kMethods); }
std::string_view to_string(ModuleSource v) noexcept { return name_of(v, kSources); }
std::string_view to_string(VerificationStatus v) noexcept { return name_of(v, kStatuses); }

Origin parse_origin(std::string_view s) { return parse_enum(s, kOrigins, "origin"); }
Method parse_method(std::string_view s) { return parse_enum(s, kMethods, "method"); }
ModuleSource parse_module_source(std::string_view s) { return parse_enum(s, kSources, "module source"); }
VerificationStatus parse_verification_status(std::string_view s) {
  return parse_enum(s, kStatuses, "verification status");
}

std::string derive_instruction_id(std::string_view text) { return content_id("i-", {text}); }

std::string derive_module_id(std::string_view code, ModuleSource source) {
  // Trailing whitespace does not change the function.
  while (!code.empty() && std::isspace(static_cast<unsigned char>(code.back()))) code.remove_suffix(1);
  return content_id("m-", {code, to_string(source)});
}

bool is_identifier(std::string_view s) noexcept {
  if (s.empty()) return false;
  auto head = static_cast<unsigned char>(s.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  for (unsigned char c : s) {
    if (!(std::isalnum(c) || c == '_')) return false;
  }
  return true;
}

std::vector<std::string> validate(const Instruction& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.emplace_back("id: empty");
  if (v.text.empty()) out.emplace_back("text: empty");
  if (v.complexity_level < 1 || v.complexity_level > 3) {
    out.emplace_back("complexity_level: must be 1, 2 or 3");
  }
  return out;
}

std::vector<std::string> validate(const DistilledResponse& v) {
  std::vector<std::string> out;
  if (v.instruction_id.empty()) out.emplace_back("instruction_id: empty");
  if (!v.extracted_code.empty() && !is_block_reassembly(v.extracted_code, v.raw_markdown)) {
    out.emplace_back("extracted_code: not a reassembly of fenced blocks in raw_markdown");
  }
  return out;
}

std::vector<std::string> validate(const Vector& v) {
  std::vector<std::string> out;
  if (v.values.empty()) {
    out.emplace_back("dim: must be positive");
    return out;
  }
  double norm2 = 0.0;
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    if (!std::isfinite(v.values[i])) {
      out.push_back("values: non-finite entry at index " + std::to_string(i));
      return out;
    }
    norm2 += v.values[i] * v.values[i];
  }
  if (v.normalized && std::abs(std::sqrt(norm2) - 1.0) > 1e-6) {
    out.emplace_back("values: flagged normalized but L2 norm is not 1");
  }
  return out;
}

std::vector<std::string> validate(const FunctionModule& v) {
  std::vector<std::string> out;
  if (v.module_id.empty()) out.emplace_back("module_id: empty");
  if (!is_identifier(v.name)) out.emplace_back("name: not an identifier");
  const auto defs = scan_top_level_definitions(v.code);
  if (defs.size() != 1 || defs.front().name != v.name) {
    out.push_back("code: must define exactly one top-level function named '" + v.name + "'");
  }
  if (v.embedding) {
    for (auto& e : validate(*v.embedding)) out.push_back("embedding." + e);
  }
  if (v.verified) {
    const bool backed = v.verification && v.verification->status == VerificationStatus::pass &&
                        v.verification->subject_id == v.module_id;
    if (!backed) out.emplace_back("verified: unsupported");
  }
  return out;
}

std::vector<std::string> validate(const SftRecord& v) {
  std::vector<std::string> out;
  if (v.instruction.empty()) out.emplace_back("instruction: empty");
  if (v.response.empty()) out.emplace_back("response: empty");
  return out;
}

std::vector<std::string> validate(const EvalProblem& v) {
  std::vector<std::string> out;
  if (v.id.empty()) out.emplace_back("id: empty");
  if (!is_identifier(v.entry_point)) out.emplace_back("entry_point: not an identifier");
  if (v.tests.empty()) {
    out.emplace_back("tests: empty");
  } else if (!v.entry_point.empty() && v.tests.find(v.entry_point) == std::string::npos) {
    out.emplace_back("tests: does not reference entry_point");
  }
  return out;
}

std::vector<std::string> validate(const VerificationReport& v) {
  std::vector<std::string> out;
  if (v.subject_id.empty()) out.emplace_back("subject_id: empty");
  if (!(v.duration >= 0.0)) out.emplace_back("duration: negative");
  return out;
}

std::vector<std::string> validate_instructions(std::span<const Instruction> set) {
  std::vector<std::string> out;
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (auto& e : validate(set[i])) out.push_back("[" + std::to_string(i) + "] " + e);
    if (!set[i].id.empty() && !seen.insert(set[i].id).second) {
      out.push_back("[" + std::to_string(i) + "] id: duplicate '" + set[i].id + "'");
    }
  }
  return out;
}

Json encode(const Instruction& v) {
  Json j;
  j["id"] = v.id;
  j["text"] = v.text;
  j["complexity_level"] = v.complexity_level;
  j["origin"] = to_string(v.origin);
  return j;
}

Json encode(const TeacherMeta& v) {
  Json j;
  j["model"] = v.model;
  j["temperature"] = v.temperature;
  j["prompt_tokens"] = v.prompt_tokens;
  j["completion_tokens"] = v.completion_tokens;
  return j;
}

Json encode(const DistilledResponse& v) {
  Json j;
  j["instruction_id"] = v.instruction_id;
  j["method"] = to_string(v.method);
  j["raw_markdown"] = v.raw_markdown;
  j["extracted_code"] = v.extracted_code;
  j["teacher_meta"] = encode(v.teacher_meta);
  j["provenance"] = encode_map(v.provenance);
  return j;
}

Json encode(const Vector& v) {
  Json j;
  j["dim"] = v.dim();
  j["normalized"] = v.normalized;
  j["values"] = v.values;
  return j;
}

Json encode(const VerificationReport& v) {
  Json j;
  j["subject_id"] = v.subject_id;
  j["status"] = to_string(v.status);
  j["stdout_tail"] = v.stdout_tail;
  j["stderr_tail"] = v.stderr_tail;
  j["duration"] = v.duration;
  return j;
}

Json encode(const FunctionModule& v) {
  Json j;
  j["module_id"] = v.module_id;
  j["name"] = v.name;
  j["signature"] = v.signature;
  j["description"] = v.description;
  j["code"] = v.code;
  j["source"] = to_string(v.source);
  j["embedding"] = v.embedding ? encode(*v.embedding) : Json(nullptr);
  j["verified"] = v.verified;
  j["verification"] = v.verification ? encode(*v.verification) : Json(nullptr);
  return j;
}

Json encode(const SftRecord& v) {
  Json j;
  j["instruction"] = v.instruction;
  j["response"] = v.response;
  j["method"] = to_string(v.method);
  j["provenance"] = encode_map(v.provenance);
  return j;
}

Json encode(const EvalProblem& v) {
  Json j;
  j["id"] = v.id;
  j["prompt"] = v.prompt;
  j["entry_point"] = v.entry_point;
  j["tests"] = v.tests;
  j["reference_solution"] = v.reference_solution ? Json(*v.reference_solution) : Json(nullptr);
  return j;
}

template <>
Instruction decode<Instruction>(const Json& j) {
  Instruction v;
  v.text = get_string(j, "text");
  v.id = get_string_or(j, "id", "");
  auto level = j.find("complexity_level");
  if (level != j.end() && !level->is_null()) {
    if (!level->is_number_integer()) throw InvalidArgument("complexity_level is not an integer");
    v.complexity_level = level->get<int>();
  }
  v.origin = parse_origin(get_string_or(j, "origin", "external"));
  return v;
}

template <>
TeacherMeta decode<TeacherMeta>(const Json& j) {
  TeacherMeta v;
  if (j.is_null()) return v;
  v.model = get_string_or(j, "model", "");
  v.temperature = j.value("temperature", 0.0);
  v.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  v.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  return v;
}

template <>
DistilledResponse decode<DistilledResponse>(const Json& j) {
  DistilledResponse v;
  v.instruction_id = get_string(j, "instruction_id");
  v.method = parse_method(get_string(j, "method"));
  v.raw_markdown = get_string(j, "raw_markdown");
  v.extracted_code = get_string_or(j, "extracted_code", "");
  if (auto it = j.find("teacher_meta"); it != j.end()) v.teacher_meta = decode<TeacherMeta>(*it);
  v.provenance = get_string_map(j, "provenance");
  return v;
}

template <>
Vector decode<Vector>(const Json& j) {
  Vector v;
  const Json& values = field(j, "values");
  if (!values.is_array()) throw InvalidArgument("embedding values is not an array");
  v.values.reserve(values.size());
  for (const auto& x : values) {
    if (!x.is_number()) throw InvalidArgument("embedding value is not a number");
    v.values.push_back(x.get<double>());
  }
  v.normalized = j.value("normalized", false);
  if (auto it = j.find("dim"); it != j.end() && it->get<std::size_t>() != v.values.size()) {
    throw InvalidArgument("embedding dim does not match values length");
  }
  return v;
}

template <>
VerificationReport decode<VerificationReport>(const Json& j) {
  VerificationReport v;
  v.subject_id = get_string(j, "subject_id");
  v.status = parse_verification_status(get_string(j, "status"));
  v.stdout_tail = get_string_or(j, "stdout_tail", "");
  v.stderr_tail = get_string_or(j, "stderr_tail", "");
  v.duration = j.value("duration", 0.0);
  return v;
}

template <>
FunctionModule decode<FunctionModule>(const Json& j) {
  FunctionModule v;
  v.code = get_string(j, "code");
  v.source = parse_module_source(get_string_or(j, "source", "seed"));
  v.module_id = get_string_or(j, "module_id", "");
  if (v.module_id.empty()) v.module_id = derive_module_id(v.code, v.source);
  v.name = get_string_or(j, "name", "");
  v.signature = get_string_or(j, "signature", "");
  v.description = get_string_or(j, "description", "");
  if (v.name.empty() || v.signature.empty()) {
    auto defs = scan_top_level_definitions(v.code);
    if (!defs.empty()) {
      if (v.name.empty()) v.name = defs.front().name;
      if (v.signature.empty()) v.signature = defs.front().signature;
      if (v.description.empty()) v.description = defs.front().description;
    }
  }
  if (auto it = j.find("embedding"); it != j.end() && !it->is_null()) {
    v.embedding = decode<Vector>(*it);
  }
  v.verified = j.value("verified", false);
  if (auto it = j.find("verification"); it != j.end() && !it->is_null()) {
    v.verification = decode<VerificationReport>(*it);
  }
  return v;
}

template <>
SftRecord decode<SftRecord>(const Json& j) {
  SftRecord v;
  v.instruction = get_string(j, "instruction");
  v.response = get_string(j, "response");
  v.method = parse_method(get_string(j, "method"));
  v.provenance = get_string_map(j, "provenance");
  return v;
}

template <>
EvalProblem decode<EvalProblem>(const Json& j) {
  EvalProblem v;
  v.id = get_string(j, "id");
  v.prompt = get_string_or(j, "prompt", "");
  v.entry_point = get_string(j, "entry_point");
  v.tests = get_string(j, "tests");
  if (auto it = j.find("reference_solution"); it != j.end() && !it->is_null()) {
    v.reference_solution = it->get<std::string>();
  }
  return v;
}

}  // namespace amrevol
