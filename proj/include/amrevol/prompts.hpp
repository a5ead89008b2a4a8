#pragma once

// The teacher prompt templates and their one-shot examples.

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>

#include "amrevol/domain.hpp"
#include "amrevol/teacher.hpp"

namespace amrevol {

enum class TemplateId {
  direct,
  cot,
  test_gen,
  ans_repair,
  modular_decomposition,
  adaptive_evolution,
  decontamination_judge,
};

inline constexpr std::array<TemplateId, 7> kAllTemplates{
    TemplateId::direct,          TemplateId::cot,
    TemplateId::test_gen,        TemplateId::ans_repair,
    TemplateId::modular_decomposition, TemplateId::adaptive_evolution,
    TemplateId::decontamination_judge};

std::string_view to_string(TemplateId id) noexcept;
/// Throws UnknownTemplate.
TemplateId parse_template_id(std::string_view s);

using Bindings = std::map<std::string, std::string, std::less<>>;

struct PromptTemplate {
  TemplateId id = TemplateId::direct;
  std::string system_text;
  std::string user_text;
  std::set<std::string, std::less<>> required_slots;
};

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 3000;
};

/// Names of `{slot}` placeholders in `text` (slot names are [a-z][a-z0-9_-]*).
std::set<std::string, std::less<>> placeholders(std::string_view text);

/// Single-pass literal substitution: substituted text is never rescanned.
/// Throws MissingSlot for any placeholder without a binding.
std::string substitute(std::string_view text, const Bindings& bindings);

/// Every module's code in a fenced block, blank-line separated, input order.
/// An empty list renders as "None".
std::string render_module_context(std::span<const FunctionModule> modules,
                                  std::string_view guest_tag = "python");

class PromptLibrary {
 public:
  /// Built-in templates and one-shot examples.
  PromptLibrary();

  /// Applies `<template_id>.system.txt` / `<template_id>.user.txt` overrides
  /// from `templates_dir` and a one-shot JSON file keyed by template id; either
  /// path may be empty.
  static PromptLibrary load(const std::filesystem::path& templates_dir,
                            const std::filesystem::path& one_shot_file);

  const PromptTemplate& get(TemplateId id) const;
  const Bindings& one_shot(TemplateId id) const;
  Decoding decoding(TemplateId id) const;

  void set_template(TemplateId id, std::string system_text, std::string user_text);
  void set_one_shot(TemplateId id, Bindings example);
  void set_decoding(TemplateId id, Decoding d);

  /// Throws MissingSlot when `bindings` lacks a required slot.
  ChatRequest render(TemplateId id, const Bindings& bindings) const;

  /// Fills the one-shot slots from this library's examples, then renders.
  /// Explicit bindings win over the examples.
  ChatRequest render_with_examples(TemplateId id, Bindings bindings) const;

 private:
  std::map<TemplateId, PromptTemplate> templates_;
  std::map<TemplateId, Bindings> one_shots_;
  std::map<TemplateId, Decoding> decodings_;
};

/// Renders with the built-in library.
ChatRequest render(TemplateId id, const Bindings& bindings);

}  // namespace amrevol
