// Regenerates tests/fixtures/amr5: five instructions, six seed functions, the
// scripted teacher transcripts and the stub verdict rules.
//
// Replies are chosen by rule from the request text; every request the
// pipeline actually sends is recorded, so the mock scripts match the prompts
// byte for byte. Usage: make_amr_fixture <out_dir>

#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "amrevol/domain.hpp"
#include "amrevol/embedding.hpp"
#include "amrevol/jsonl.hpp"
#include "amrevol/module_db.hpp"
#include "amrevol/pipeline.hpp"
#include "amrevol/prompts.hpp"
#include "amrevol/sandbox.hpp"
#include "amrevol/teacher.hpp"

using namespace amrevol;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kDim = 256;

std::string py(const std::string& body) { return "```python\n" + body + "```"; }

const std::vector<std::string> kSeedCode = {
    "def is_even(n):\n    \"\"\"Return True if n is even.\"\"\"\n    return n % 2 == 0\n",
    "def square(x):\n    \"\"\"Return x squared.\"\"\"\n    return x * x\n",
    "def reverse_string(s):\n    \"\"\"Return the characters of s in reverse order.\"\"\"\n"
    "    return s[::-1]\n",
    "def count_vowels(text):\n    \"\"\"Count the vowels in text, ignoring case.\"\"\"\n"
    "    return sum(1 for ch in text.lower() if ch in \"aeiou\")\n",
    "def gcd(a, b):\n    \"\"\"Greatest common divisor of two non-negative integers.\"\"\"\n"
    "    while b:\n        a, b = b, a % b\n    return a\n",
    "def unsafe_divide(a, b):\n    \"\"\"Divide a by b.\"\"\"\n    return a / b\n",
};

// Unit tests the teacher writes, by function name.
const std::map<std::string, std::string> kTests = {
    {"is_even", "def test_is_even():\n    assert is_even(4)\n    assert not is_even(7)\n"},
    {"square", "def test_square():\n    assert square(3) == 9\n    assert square(-2) == 4\n"},
    {"reverse_string",
     "def test_reverse_string():\n    assert reverse_string(\"abc\") == \"cba\"\n"
     "    assert reverse_string(\"\") == \"\"\n"},
    {"count_vowels",
     "def test_count_vowels():\n    assert count_vowels(\"Hello World\") == 3\n"
     "    assert count_vowels(\"xyz\") == 0\n"},
    {"gcd", "def test_gcd():\n    assert gcd(12, 18) == 6\n    assert gcd(7, 0) == 7\n"},
    {"unsafe_divide",
     "# expect-fail\ndef test_unsafe_divide():\n    assert unsafe_divide(1, 0) == 0\n"},
    {"even_squares",
     "def test_even_squares():\n    assert even_squares([1, 2, 3, 4]) == [4, 16]\n"
     "    assert even_squares([]) == []\n"},
    {"is_palindrome",
     "# expect-fail\ndef test_is_palindrome():\n    assert is_palindrome(\"Racecar\")\n"},
    {"factorial",
     "def test_factorial():\n    assert factorial(0) == 1\n    assert factorial(5) == 120\n"},
};

struct Scenario {
  std::string text;
  std::string direct;
  std::string decomposition;
  std::string evolution;
};

const std::vector<Scenario> kScenarios = {
    {"Write a function gcd(a, b) that returns the greatest common divisor of two non-negative "
     "integers.",
     "Here is a recursive solution.\n\n" +
         py("def gcd(a, b):\n    if b == 0:\n        return a\n    return gcd(b, a % b)\n"),
     "The solution is a single module.\n\n" +
         py("def gcd(a, b):\n    \"\"\"Greatest common divisor by Euclid's recursion.\"\"\"\n"
            "    if b == 0:\n        return a\n    return gcd(b, a % b)\n"),
     "An iterative version avoids deep recursion.\n\n" + py(kSeedCode[4])},
    {"Write a function even_squares(numbers) that returns a list of the squares of the even "
     "numbers in the input list, in order.",
     py("def even_squares(numbers):\n    return [n * n for n in numbers if n % 2 == 0]\n"),
     py("def is_even(n):\n    \"\"\"Check whether n is divisible by two.\"\"\"\n"
        "    return n % 2 == 0\n\n\n"
        "def square(x):\n    \"\"\"Multiply x by itself.\"\"\"\n    return x * x\n\n\n"
        "def even_squares(numbers):\n    \"\"\"Squares of the even numbers.\"\"\"\n"
        "    return [square(n) for n in numbers if is_even(n)]\n"),
     "Built from small helpers:\n\n" +
         py(kSeedCode[0] + "\n\n" + kSeedCode[1] +
            "\n\ndef even_squares(numbers):\n"
            "    \"\"\"Squares of the even numbers in numbers, in input order.\"\"\"\n"
            "    return [square(n) for n in numbers if is_even(n)]\n")},
    {"Write a function count_vowels(text) that counts the vowels in a string, ignoring case.",
     py("def count_vowels(text):\n    total = 0\n    for ch in text.lower():\n"
        "        if ch in \"aeiou\":\n            total += 1\n    return total\n"),
     py("def count_vowels(text):\n    \"\"\"Number of vowels in text.\"\"\"\n    total = 0\n"
        "    for ch in text.lower():\n        if ch in \"aeiou\":\n            total += 1\n"
        "    return total\n"),
     "A generator expression is enough.\n\n" + py(kSeedCode[3])},
    {"Write a function is_palindrome(s) that checks whether a string reads the same forwards "
     "and backwards.",
     py("def is_palindrome(s):\n    return s == s[::-1]\n"),
     py("def reverse_string(s):\n    \"\"\"Reverse s.\"\"\"\n    return s[::-1]\n\n\n"
        "def is_palindrome(s):\n    \"\"\"Compare s with its reverse.\"\"\"\n"
        "    return s == reverse_string(s)\n"),
     py(kSeedCode[2] +
        "\n\ndef is_palindrome(s):\n    \"\"\"Return True if s reads the same in both "
        "directions.\"\"\"\n    return s == reverse_string(s)\n")},
    {"Write a function factorial(n) that returns n! for a non-negative integer n.",
     py("def factorial(n):\n    if n <= 1:\n        return 1\n    return n * factorial(n - 1)\n"),
     "This solution is already a single small function, so it needs no further decomposition.",
     "A loop avoids the recursion limit.\n\n" +
         py("def factorial(n):\n    \"\"\"Product of the integers from 1 to n.\"\"\"\n"
            "    result = 1\n    for i in range(2, n + 1):\n        result *= i\n"
            "    return result\n")},
};

class Responder final : public ChatTransport {
 public:
  ChatResponse send(const ChatRequest& req) override {
    std::string reply = answer(req.user);
    std::lock_guard lock(mutex_);
    auto [it, inserted] = recorded_.emplace(req.user, reply);
    if (inserted) order_.push_back(req.user);
    ChatResponse r;
    r.content = reply;
    r.usage = {approx_tokens(req.system) + approx_tokens(req.user), approx_tokens(reply)};
    return r;
  }

  std::vector<MockEntry> script() const {
    std::vector<MockEntry> out;
    for (const auto& user : order_) out.push_back({user, recorded_.at(user), ""});
    return out;
  }

  void clear() {
    recorded_.clear();
    order_.clear();
  }

 private:
  static std::string answer(const std::string& user) {
    for (const auto& s : kScenarios) {
      if (user == s.text) return s.direct;
    }
    if (user.find("### Possible Code Solution:") != std::string::npos) {
      const auto sol = user.find("### Possible Code Solution:");
      for (const auto& [name, tests] : kTests) {
        if (user.find("def " + name + "(", sol) != std::string::npos) {
          return "These tests cover the main cases.\n\n" + py(tests);
        }
      }
      throw RequestInvalid("no tests scripted for:\n" + user);
    }
    for (const auto& s : kScenarios) {
      if (user.find("### Python Question:\n" + s.text + "\n") == std::string::npos) continue;
      if (user.find("### Potential Solution:") != std::string::npos) return s.decomposition;
      if (user.find("### Relevant Functions:") != std::string::npos) return s.evolution;
    }
    throw RequestInvalid("unscripted request:\n" + user);
  }

  std::mutex mutex_;
  std::map<std::string, std::string> recorded_;
  std::vector<std::string> order_;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_amr_fixture <out_dir>\n";
    return 2;
  }
  const fs::path out = argv[1];
  fs::create_directories(out);

  std::vector<Instruction> instructions;
  for (const auto& s : kScenarios) {
    instructions.push_back({derive_instruction_id(s.text), s.text, 1, Origin::external});
  }
  save_instructions(out / "instructions.jsonl", instructions);

  std::vector<Json> seeds;
  for (const auto& code : kSeedCode) seeds.push_back(Json{{"code", code}, {"source", "seed"}});
  write_jsonl(out / "seeds.jsonl", make_header("seeds"), seeds);

  const std::vector<StubRule> rules = {{"# expect-fail", VerificationStatus::fail},
                                       {"", VerificationStatus::pass}};
  save_stub_script(out / "stub.jsonl", rules);

  auto responder = std::make_shared<Responder>();
  TeacherGateway teacher(responder);
  const PromptLibrary prompts;
  StubExecutor executor(rules);
  const LocalHashEmbedder embedder(kDim);

  // Seed database.
  ModuleDatabase db(kDim);
  auto seed_modules = decode_records<FunctionModule>(read_jsonl(out / "seeds.jsonl"));
  PipelineServices services{&teacher, &prompts, &executor, &embedder, &db};
  PipelineConfig cfg;
  auto report = seed_module_db(seed_modules, services, cfg);
  db.save(out / "modules.jsonl");
  save_mock_script(out / "seed_mock.jsonl", responder->script());
  std::cerr << "seeded: " << report.admitted << " admitted, " << report.rejected
            << " rejected, " << report.duplicate << " duplicate\n";
  responder->clear();

  // Synthesis transcripts, for every window size a test may use.
  for (std::size_t p : {1u, 2u, 3u, 4u, 5u}) {
    ModuleDatabase run_db = ModuleDatabase::load(out / "modules.jsonl");
    PipelineServices s{&teacher, &prompts, &executor, &embedder, &run_db};
    PipelineConfig c;
    c.method = Method::amr;
    c.parallelism = p;
    auto result = run_pipeline(instructions, c, s);
    if (result.errors != 0) {
      std::cerr << "pipeline reported errors at parallelism " << p << "\n";
      return 1;
    }
    for (const auto& t : result.traces) {
      for (const auto& cand : t.candidates) {
        if (cand.novel && cand.nearest && cand.nearest->score >= 0.85) {
          std::cerr << "warning: novel module " << cand.module.name << " scores "
                    << cand.nearest->score << "\n";
        }
      }
    }
    std::cerr << "parallelism " << p << ": " << result.admitted << " admitted, db "
              << run_db.size() << "\n";
  }
  save_mock_script(out / "mock.jsonl", responder->script());
  return 0;
}
