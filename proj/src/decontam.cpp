#include "amrevol/decontam.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <set>
#include <thread>

#include "amrevol/error.hpp"
#include "amrevol/jsonl.hpp"

namespace amrevol {

std::string_view to_string(JudgeVerdict v) noexcept {
  switch (v) {
    case JudgeVerdict::match: return "MATCH";
    case JudgeVerdict::no_match: return "NO_MATCH";
    case JudgeVerdict::unjudged: return "unjudged";
  }
  return "unjudged";
}

JudgeVerdict parse_judge_verdict(std::string_view s) {
  if (s == "MATCH") return JudgeVerdict::match;
  if (s == "NO_MATCH") return JudgeVerdict::no_match;
  if (s == "unjudged") return JudgeVerdict::unjudged;
  throw InvalidArgument("unknown verdict: " + std::string(s));
}

JudgeVerdict parse_judge_reply(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && !std::isalpha(static_cast<unsigned char>(reply[i]))) ++i;
  std::string word;
  while (i < reply.size() &&
         (std::isalpha(static_cast<unsigned char>(reply[i])) || reply[i] == '_')) {
    word += static_cast<char>(std::toupper(static_cast<unsigned char>(reply[i])));
    ++i;
  }
  if (word == "SAME" || word == "MATCH") return JudgeVerdict::match;
  if (word == "DIFFERENT" || word == "NO_MATCH") return JudgeVerdict::no_match;
  return JudgeVerdict::unjudged;
}

Json encode(const ContaminationPair& p) {
  Json j;
  j["test_id"] = p.test_id;
  j["train_id"] = p.train_id;
  j["score"] = p.score;
  j["verdict"] = to_string(p.verdict);
  return j;
}

ContaminationPair decode_contamination_pair(const Json& j) {
  try {
    return {j.at("test_id").get<std::string>(), j.at("train_id").get<std::string>(),
            j.at("score").get<double>(), parse_judge_verdict(j.at("verdict").get<std::string>())};
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidArgument(std::string("bad contamination record: ") + e.what());
  }
}

std::vector<ContaminationPair> flag_contamination(std::span<const Instruction> train,
                                                  std::span<const Instruction> test,
                                                  const EmbeddingProvider& embedder,
                                                  const TeacherGateway* judge,
                                                  const PromptLibrary* prompts,
                                                  const DecontamOptions& options) {
  if (options.top_n == 0) throw InvalidArgument("top_n must be positive");
  if (options.parallelism == 0) throw InvalidArgument("parallelism must be positive");
  const PromptLibrary builtin;
  if (prompts == nullptr) prompts = &builtin;

  std::vector<IndexedVector> corpus;
  corpus.reserve(train.size());
  std::map<std::string, const Instruction*> by_id;
  for (const auto& ins : train) {
    corpus.push_back({ins.id, embedder.embed(ins.text)});
    by_id[ins.id] = &ins;
  }

  std::vector<std::vector<ContaminationPair>> per_test(test.size());
  std::vector<std::exception_ptr> failures(test.size());
  auto work = [&](std::size_t t) {
    try {
      const Instruction& q = test[t];
      if (corpus.empty()) return;
      auto matches = top_k(embedder.embed(q.text), std::span<const IndexedVector>(corpus),
                           options.top_n);
      for (const auto& m : matches) {
        ContaminationPair p{q.id, m.module_id, m.score, JudgeVerdict::unjudged};
        if (judge != nullptr) {
          ChatRequest req = prompts->render_with_examples(
              TemplateId::decontamination_judge,
              {{"train-sample", by_id.at(m.module_id)->text}, {"test-sample", q.text}});
          req.model = options.model;
          try {
            p.verdict = parse_judge_reply(judge->complete_chat(req).content);
          } catch (const TransportError&) {
          } catch (const RequestInvalid&) {
          }
        }
        per_test[t].push_back(std::move(p));
      }
    } catch (...) {
      failures[t] = std::current_exception();
    }
  };

  const std::size_t workers = std::min(options.parallelism, test.size());
  if (workers <= 1) {
    for (std::size_t t = 0; t < test.size(); ++t) work(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next.fetch_add(1); t < test.size(); t = next.fetch_add(1)) work(t);
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  std::vector<ContaminationPair> out;
  for (auto& v : per_test) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<Instruction> filter_matches(std::span<const Instruction> train,
                                        std::span<const ContaminationPair> pairs) {
  std::set<std::string> drop;
  for (const auto& p : pairs) {
    if (p.verdict == JudgeVerdict::match) drop.insert(p.train_id);
  }
  std::vector<Instruction> out;
  for (const auto& ins : train) {
    if (!drop.count(ins.id)) out.push_back(ins);
  }
  return out;
}

void save_contamination_report(const std::filesystem::path& path,
                               std::span<const ContaminationPair> pairs) {
  std::vector<Json> records;
  for (const auto& p : pairs) records.push_back(encode(p));
  write_jsonl(path, make_header("contamination"), records);
}

std::vector<ContaminationPair> load_contamination_report(const std::filesystem::path& path) {
  JsonlFile file = read_jsonl(path, "contamination");
  std::vector<ContaminationPair> out;
  for (const auto& rec : file.records) {
    try {
      out.push_back(decode_contamination_pair(rec.value));
    } catch (const std::exception& e) {
      throw CorruptRecord(rec.line, e.what());
    }
  }
  return out;
}

}  // namespace amrevol
