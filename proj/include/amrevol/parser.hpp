#pragma once

// Markdown code extraction and indentation-based splitting of guest code into
// top-level function modules.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "amrevol/domain.hpp"

namespace amrevol {

/// Appended to the language tag of a fence that runs to end of input.
inline constexpr std::string_view kUnterminatedMarker = "+unterminated";

struct CodeBlock {
  std::string language_tag;
  std::string body;
  // markdown.substr(span_begin, span_end - span_begin) == body
  std::size_t span_begin = 0;
  std::size_t span_end = 0;

  bool terminated() const noexcept;
  /// Tag with the unterminated marker removed.
  std::string_view base_tag() const noexcept;

  bool operator==(const CodeBlock&) const = default;
};

std::vector<CodeBlock> extract_code_blocks(std::string_view markdown);

/// Bodies of all blocks tagged `guest_tag` (case-insensitive) or untagged,
/// joined by one blank line. Empty string means nothing was extracted.
std::string extract_primary_solution(std::string_view markdown, std::string_view guest_tag);

/// Wraps code in a fence tagged `guest_tag`.
std::string fence(std::string_view code, std::string_view guest_tag);

struct TopLevelDefinition {
  enum class Kind { function, class_ };
  Kind kind = Kind::function;
  std::string name;
  std::string signature;    // the definition line
  std::string description;  // docstring, else preceding comment lines
  std::string code;         // decorators + definition + body
  std::size_t first_line = 0;  // 0-based, the first decorator or definition line
};

/// Column-0 `def`/`async def`/`class` scan. A definition runs until the next
/// column-0 line that is neither blank nor a comment, ignoring lines inside
/// triple-quoted strings.
std::vector<TopLevelDefinition> scan_top_level_definitions(std::string_view code);

/// Column-0 `import x` / `from x import y` lines, in order.
std::vector<std::string> top_level_imports(std::string_view code);

/// Splits the guest code of a decomposition response into modules with
/// source=decomposed, verified=false and content-derived ids. Throws
/// ParseFailure when the response holds no top-level definition.
std::vector<FunctionModule> parse_function_modules(std::string_view markdown,
                                                   std::string_view guest_tag,
                                                   ModuleSource source = ModuleSource::decomposed);

/// Same split applied to bare code (no markdown fences).
std::vector<FunctionModule> split_function_modules(std::string_view code,
                                                   ModuleSource source = ModuleSource::decomposed);

}  // namespace amrevol
