#pragma once

// Finds training instructions that resemble test instructions by embedding
// retrieval, optionally confirmed by a teacher judgment.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "amrevol/domain.hpp"
#include "amrevol/embedding.hpp"
#include "amrevol/prompts.hpp"
#include "amrevol/teacher.hpp"

namespace amrevol {

enum class JudgeVerdict { match, no_match, unjudged };

/// "MATCH", "NO_MATCH", "unjudged".
std::string_view to_string(JudgeVerdict v) noexcept;
JudgeVerdict parse_judge_verdict(std::string_view s);

/// Maps a judge reply to a verdict: SAME or MATCH -> match, DIFFERENT or
/// NO_MATCH -> no_match (first word, case-insensitive), anything else unjudged.
JudgeVerdict parse_judge_reply(std::string_view reply);

struct ContaminationPair {
  std::string test_id;
  std::string train_id;
  double score = 0.0;
  JudgeVerdict verdict = JudgeVerdict::unjudged;

  bool operator==(const ContaminationPair&) const = default;
};

Json encode(const ContaminationPair& p);
ContaminationPair decode_contamination_pair(const Json& j);

struct DecontamOptions {
  std::size_t top_n = 5;
  std::size_t parallelism = 4;
  std::string model;  // judge model; empty uses the gateway default
};

/// For each test sample (input order), its top_n most similar training
/// samples by cosine similarity, best first. Pairs are judged when `judge` is
/// given; a judge transport failure leaves the pair unjudged.
std::vector<ContaminationPair> flag_contamination(std::span<const Instruction> train,
                                                  std::span<const Instruction> test,
                                                  const EmbeddingProvider& embedder,
                                                  const TeacherGateway* judge = nullptr,
                                                  const PromptLibrary* prompts = nullptr,
                                                  const DecontamOptions& options = {});

/// Training records minus every train id with a MATCH verdict, order kept.
std::vector<Instruction> filter_matches(std::span<const Instruction> train,
                                        std::span<const ContaminationPair> pairs);

void save_contamination_report(const std::filesystem::path& path,
                               std::span<const ContaminationPair> pairs);
std::vector<ContaminationPair> load_contamination_report(const std::filesystem::path& path);

}  // namespace amrevol
