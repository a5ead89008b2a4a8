#include "amrevol/prompts.hpp"

#include <fstream>
#include <sstream>

#include "amrevol/error.hpp"
#include "amrevol/parser.hpp"

namespace amrevol {

namespace {

struct BuiltinTemplate {
  TemplateId id;
  std::string_view name;
  std::string_view system;
  std::string_view user;
};

constexpr std::string_view kDirectSystem =
    "You are a professional coder. Your answer must include Python code in Markdown format.";

constexpr std::string_view kCotSystem =
    "You are a professional coder. You will be given a Python Question. Your objective is to "
    "develop an accurate solution to the Python Question. Begin by step-by-step think about your "
    "approach to solve this question, then proceed to generate your final code response in "
    "Markdown format.\n"
    "\n"
    "## One-Shot Example\n"
    "### Python Question:\n"
    "{one-shot-example-question}\n"
    "\n"
    "### Correct Solution:\n"
    "{one-shot-example-solution}";

constexpr std::string_view kCotUser =
    "## New Task\n"
    "### Python Question:\n"
    "{question}\n"
    "\n"
    "### Correct Solution:";

constexpr std::string_view kTestGenSystem =
    "You are a professional coder. You will be given a Python Question and its possible code "
    "solution. Your objective is to provide a test function to test whether the code solution is "
    "correct or not. Your response should be in Markdown format.\n"
    "\n"
    "## One-Shot Example\n"
    "### Python Question:\n"
    "{one-shot-example-question}\n"
    "\n"
    "### Possible Code Solution:\n"
    "{one-shot-example-solution}\n"
    "\n"
    "### Tests Function:\n"
    "{one-shot-example-tests}";

constexpr std::string_view kTestGenUser =
    "## New Task\n"
    "### Python Question:\n"
    "{question}\n"
    "\n"
    "### Possible Code Solution:\n"
    "{answer}\n"
    "\n"
    "### Tests Function:";

constexpr std::string_view kAnsRepairSystem =
    "You are a professional coder. You will be given a Python Question and its wrong solution. You "
    "need to provide the correct solution for the Python Question in Markdown format.\n"
    "\n"
    "## One-Shot Example\n"
    "### Python Question:\n"
    "{one-shot-example-question}\n"
    "\n"
    "### Wrong Solution:\n"
    "{one-shot-example-wrong-answer}\n"
    "\n"
    "### Correct Solution:\n"
    "{one-shot-example-correct-answer}";

constexpr std::string_view kAnsRepairUser =
    "## New Task\n"
    "### Python Question:\n"
    "{question}\n"
    "\n"
    "### Wrong Solution:\n"
    "{answer}\n"
    "\n"
    "### Correct Solution:";

constexpr std::string_view kDecompositionSystem =
    "You will be presented with a Python coding question along with a potential solution. Your "
    "task is to deconstruct the given solution into smaller, manageable modules. Each module "
    "should be clearly defined with specific function names, detailed input/output "
    "specifications, and concise function descriptions. Do NOT repeat the functions in the "
    "One-Shot Example.\n"
    "\n"
    "## One-Shot Example\n"
    "### Python Question:\n"
    "{one-shot-example-question}\n"
    "\n"
    "### Potential Solution:\n"
    "{one-shot-example-solution}\n"
    "\n"
    "### RESPONSE:\n"
    "{one-shot-example-modules}";

constexpr std::string_view kDecompositionUser =
    "## New Task\n"
    "### Python Question:\n"
    "{question}\n"
    "\n"
    "### Potential Solution:\n"
    "{answer}\n"
    "\n"
    "### RESPONSE:";

constexpr std::string_view kEvolutionSystem =
    "You are a professional coder. You will be given a Python Question and a selection of "
    "relevant, modularized functions intended to inspire your approach. Your objective is to "
    "develop a more refined and accurate solution to the Python Question. Your response should "
    "pretend that you have never seen the Relevant Functions.\n"
    "\n"
    "## One-Shot Example\n"
    "### Python Question:\n"
    "{one-shot-example-question}\n"
    "\n"
    "### Relevant Functions:\n"
    "{one-shot-example-similar-functions}\n"
    "\n"
    "### Correct Solution:\n"
    "{one-shot-example-solution}";

constexpr std::string_view kEvolutionUser =
    "## New Task\n"
    "### Python Question:\n"
    "{question}\n"
    "\n"
    "### Relevant Functions:\n"
    "{similar-functions}\n"
    "\n"
    "### Correct Solution:";

constexpr std::string_view kJudgeSystem =
    "You are a careful reviewer of coding datasets. You will be given a training sample and a "
    "test sample. Decide whether the two samples describe the same programming task, so that "
    "training on one would leak the answer to the other. Reply with exactly one word: SAME or "
    "DIFFERENT.";

constexpr std::string_view kJudgeUser =
    "### Training Sample:\n"
    "{train-sample}\n"
    "\n"
    "### Test Sample:\n"
    "{test-sample}\n"
    "\n"
    "### Verdict:";

constexpr std::array<BuiltinTemplate, 7> kBuiltins{{
    {TemplateId::direct, "direct", kDirectSystem, "{instruction}"},
    {TemplateId::cot, "cot", kCotSystem, kCotUser},
    {TemplateId::test_gen, "test_gen", kTestGenSystem, kTestGenUser},
    {TemplateId::ans_repair, "ans_repair", kAnsRepairSystem, kAnsRepairUser},
    {TemplateId::modular_decomposition, "modular_decomposition", kDecompositionSystem,
     kDecompositionUser},
    {TemplateId::adaptive_evolution, "adaptive_evolution", kEvolutionSystem, kEvolutionUser},
    {TemplateId::decontamination_judge, "decontamination_judge", kJudgeSystem, kJudgeUser},
}};

// One worked example shared by every template that embeds one.
constexpr std::string_view kExampleQuestion =
    "Write a function that returns the sum of the squares of the even numbers in a list.";

constexpr std::string_view kExampleSolution =
    "```python\n"
    "def sum_even_squares(numbers):\n"
    "    return sum(n * n for n in numbers if n % 2 == 0)\n"
    "```";

constexpr std::string_view kExampleCotSolution =
    "We keep only the even numbers, square each of them and add the squares up. A generator "
    "expression does all three steps in one pass and returns 0 for an empty list.\n"
    "\n"
    "```python\n"
    "def sum_even_squares(numbers):\n"
    "    return sum(n * n for n in numbers if n % 2 == 0)\n"
    "```";

constexpr std::string_view kExampleTests =
    "```python\n"
    "def test_sum_even_squares():\n"
    "    assert sum_even_squares([1, 2, 3, 4]) == 20\n"
    "    assert sum_even_squares([]) == 0\n"
    "    assert sum_even_squares([1, 3, 5]) == 0\n"
    "    assert sum_even_squares([-2]) == 4\n"
    "```";

constexpr std::string_view kExampleWrongAnswer =
    "```python\n"
    "def sum_even_squares(numbers):\n"
    "    return sum(n * n for n in numbers if n % 2 == 1)\n"
    "```";

constexpr std::string_view kExampleModules =
    "```python\n"
    "def is_even(n):\n"
    "    \"\"\"Return True when n is even.\n"
    "\n"
    "    Input: n (int). Output: bool.\n"
    "    \"\"\"\n"
    "    return n % 2 == 0\n"
    "\n"
    "\n"
    "def square(n):\n"
    "    \"\"\"Return n multiplied by itself.\n"
    "\n"
    "    Input: n (int). Output: int.\n"
    "    \"\"\"\n"
    "    return n * n\n"
    "\n"
    "\n"
    "def sum_even_squares(numbers):\n"
    "    \"\"\"Sum the squares of the even integers in numbers.\n"
    "\n"
    "    Input: numbers (list of int). Output: int.\n"
    "    \"\"\"\n"
    "    return sum(square(n) for n in numbers if is_even(n))\n"
    "```";

constexpr std::string_view kExampleSimilarFunctions =
    "```python\n"
    "def filter_odd(values):\n"
    "    return [v for v in values if v % 2 != 0]\n"
    "```\n"
    "\n"
    "```python\n"
    "def sum_of_cubes(values):\n"
    "    return sum(v ** 3 for v in values)\n"
    "```";

Bindings builtin_one_shot(TemplateId id) {
  const std::string q(kExampleQuestion);
  switch (id) {
    case TemplateId::cot:
      return {{"one-shot-example-question", q},
              {"one-shot-example-solution", std::string(kExampleCotSolution)}};
    case TemplateId::test_gen:
      return {{"one-shot-example-question", q},
              {"one-shot-example-solution", std::string(kExampleSolution)},
              {"one-shot-example-tests", std::string(kExampleTests)}};
    case TemplateId::ans_repair:
      return {{"one-shot-example-question", q},
              {"one-shot-example-wrong-answer", std::string(kExampleWrongAnswer)},
              {"one-shot-example-correct-answer", std::string(kExampleSolution)}};
    case TemplateId::modular_decomposition:
      return {{"one-shot-example-question", q},
              {"one-shot-example-solution", std::string(kExampleSolution)},
              {"one-shot-example-modules", std::string(kExampleModules)}};
    case TemplateId::adaptive_evolution:
      return {{"one-shot-example-question", q},
              {"one-shot-example-similar-functions", std::string(kExampleSimilarFunctions)},
              {"one-shot-example-solution", std::string(kExampleSolution)}};
    default:
      return {};
  }
}

bool is_slot_char(char c, bool first) {
  if (c >= 'a' && c <= 'z') return true;
  if (first) return false;
  return (c >= '0' && c <= '9') || c == '-' || c == '_';
}

/// Length of the slot name starting at text[pos] (just after '{'), or 0.
std::size_t slot_length(std::string_view text, std::size_t pos) {
  std::size_t n = 0;
  while (pos + n < text.size() && is_slot_char(text[pos + n], n == 0)) ++n;
  if (n == 0 || pos + n >= text.size() || text[pos + n] != '}') return 0;
  return n;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(TemplateId id) noexcept {
  for (const auto& b : kBuiltins) {
    if (b.id == id) return b.name;
  }
  return "?";
}

TemplateId parse_template_id(std::string_view s) {
  for (const auto& b : kBuiltins) {
    if (b.name == s) return b.id;
  }
  throw UnknownTemplate("unknown prompt template: '" + std::string(s) + "'");
}

std::set<std::string, std::less<>> placeholders(std::string_view text) {
  std::set<std::string, std::less<>> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    if (std::size_t n = slot_length(text, i + 1)) {
      out.emplace(text.substr(i + 1, n));
      i += n + 1;
    }
  }
  return out;
}

std::string substitute(std::string_view text, const Bindings& bindings) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '{') {
      if (std::size_t n = slot_length(text, i + 1)) {
        const auto name = text.substr(i + 1, n);
        auto it = bindings.find(name);
        if (it == bindings.end()) throw MissingSlot(std::string(name));
        out += it->second;
        i += n + 1;
        continue;
      }
    }
    out += text[i];
  }
  return out;
}

std::string render_module_context(std::span<const FunctionModule> modules,
                                  std::string_view guest_tag) {
  if (modules.empty()) return "None";
  std::string out;
  for (std::size_t i = 0; i < modules.size(); ++i) {
    if (i) out += "\n\n";
    out += fence(modules[i].code, guest_tag);
  }
  return out;
}

PromptLibrary::PromptLibrary() {
  for (const auto& b : kBuiltins) {
    set_template(b.id, std::string(b.system), std::string(b.user));
    one_shots_[b.id] = builtin_one_shot(b.id);
    decodings_[b.id] = Decoding{};
  }
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& templates_dir,
                                  const std::filesystem::path& one_shot_file) {
  PromptLibrary lib;
  if (!templates_dir.empty()) {
    if (!std::filesystem::is_directory(templates_dir)) {
      throw IoError("templates directory not found: " + templates_dir.string());
    }
    for (const auto& b : kBuiltins) {
      const auto sys = templates_dir / (std::string(b.name) + ".system.txt");
      const auto usr = templates_dir / (std::string(b.name) + ".user.txt");
      const bool has_sys = std::filesystem::exists(sys);
      const bool has_usr = std::filesystem::exists(usr);
      if (!has_sys && !has_usr) continue;
      const auto& current = lib.get(b.id);
      lib.set_template(b.id, has_sys ? read_file(sys) : current.system_text,
                       has_usr ? read_file(usr) : current.user_text);
    }
  }
  if (!one_shot_file.empty()) {
    Json j;
    try {
      j = Json::parse(read_file(one_shot_file));
    } catch (const Json::parse_error& e) {
      throw InvalidArgument("malformed one-shot file " + one_shot_file.string() + ": " + e.what());
    }
    if (!j.is_object()) throw InvalidArgument("one-shot file must hold a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const TemplateId id = parse_template_id(it.key());
      Bindings example;
      for (auto slot = it.value().begin(); slot != it.value().end(); ++slot) {
        example[slot.key()] = slot.value().get<std::string>();
      }
      lib.set_one_shot(id, std::move(example));
    }
  }
  return lib;
}

const PromptTemplate& PromptLibrary::get(TemplateId id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw UnknownTemplate("template not registered");
  return it->second;
}

const Bindings& PromptLibrary::one_shot(TemplateId id) const {
  static const Bindings empty;
  auto it = one_shots_.find(id);
  return it == one_shots_.end() ? empty : it->second;
}

Decoding PromptLibrary::decoding(TemplateId id) const {
  auto it = decodings_.find(id);
  return it == decodings_.end() ? Decoding{} : it->second;
}

void PromptLibrary::set_template(TemplateId id, std::string system_text, std::string user_text) {
  PromptTemplate t;
  t.id = id;
  t.required_slots = placeholders(system_text);
  for (auto& s : placeholders(user_text)) t.required_slots.insert(s);
  t.system_text = std::move(system_text);
  t.user_text = std::move(user_text);
  templates_[id] = std::move(t);
}

void PromptLibrary::set_one_shot(TemplateId id, Bindings example) {
  one_shots_[id] = std::move(example);
}

void PromptLibrary::set_decoding(TemplateId id, Decoding d) { decodings_[id] = d; }

ChatRequest PromptLibrary::render(TemplateId id, const Bindings& bindings) const {
  const auto& t = get(id);
  for (const auto& slot : t.required_slots) {
    if (!bindings.contains(slot)) throw MissingSlot(slot);
  }
  ChatRequest r;
  r.system = substitute(t.system_text, bindings);
  r.user = substitute(t.user_text, bindings);
  const Decoding d = decoding(id);
  r.temperature = d.temperature;
  r.max_tokens = d.max_tokens;
  return r;
}

ChatRequest PromptLibrary::render_with_examples(TemplateId id, Bindings bindings) const {
  for (const auto& [slot, text] : one_shot(id)) bindings.try_emplace(slot, text);
  return render(id, bindings);
}

ChatRequest render(TemplateId id, const Bindings& bindings) {
  static const PromptLibrary builtin;
  return builtin.render(id, bindings);
}

}  // namespace amrevol
