#include "amrevol/parser.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include "amrevol/error.hpp"

namespace amrevol {

namespace {

struct Line {
  std::size_t begin = 0;  // offset of first byte
  std::size_t end = 0;    // offset one past the last byte, excluding '\n'
  std::string_view text;  // without '\n' and a trailing '\r'
};

std::vector<Line> split_lines(std::string_view s) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t nl = s.find('\n', pos);
    std::size_t end = nl == std::string_view::npos ? s.size() : nl;
    std::string_view text = s.substr(pos, end - pos);
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    lines.push_back({pos, end, text});
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

std::string_view ltrim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::string_view trim(std::string_view s) {
  s = ltrim(s);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

bool is_closing_fence(std::string_view text) {
  auto t = ltrim(text);
  if (!t.starts_with("```")) return false;
  while (!t.empty() && t.front() == '`') t.remove_prefix(1);
  return is_blank(t);
}

// Tracks whether a line ends inside a triple-quoted string.
class StringState {
 public:
  bool inside() const noexcept { return delim_ != 0; }

  void feed(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size()) {
      char c = line[i];
      if (delim_ != 0) {
        if (c == '\\') {
          i += 2;
          continue;
        }
        if (c == delim_ && line.substr(i, 3) == std::string(3, delim_)) {
          delim_ = 0;
          i += 3;
          continue;
        }
        ++i;
        continue;
      }
      if (c == '#') return;
      if (c == '"' || c == '\'') {
        if (line.substr(i, 3) == std::string(3, c)) {
          delim_ = c;
          i += 3;
          continue;
        }
        // single-line string literal
        ++i;
        while (i < line.size() && line[i] != c) {
          if (line[i] == '\\') ++i;
          ++i;
        }
        ++i;
        continue;
      }
      ++i;
    }
  }

 private:
  char delim_ = 0;
};

enum class LineKind { blank, comment, indented, decorator, definition, statement };

LineKind classify(std::string_view text) {
  if (is_blank(text)) return LineKind::blank;
  char c = text.front();
  if (c == ' ' || c == '\t') return LineKind::indented;
  if (c == '#') return LineKind::comment;
  if (c == '@') return LineKind::decorator;
  if (text.starts_with("def ") || text.starts_with("async def ") || text.starts_with("class ")) {
    return LineKind::definition;
  }
  return LineKind::statement;
}

std::string identifier_after(std::string_view text, std::string_view keyword) {
  auto rest = ltrim(text.substr(keyword.size()));
  std::size_t n = 0;
  while (n < rest.size() &&
         (std::isalnum(static_cast<unsigned char>(rest[n])) || rest[n] == '_')) {
    ++n;
  }
  return std::string(rest.substr(0, n));
}

std::string strip_comment_marker(std::string_view line) {
  auto t = ltrim(line);
  while (!t.empty() && t.front() == '#') t.remove_prefix(1);
  if (!t.empty() && t.front() == ' ') t.remove_prefix(1);
  return std::string(trim(t));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Reads the docstring that opens the body starting at `from`, if any.
std::string docstring_at(const std::vector<Line>& lines, std::size_t from, std::size_t last) {
  std::size_t i = from;
  while (i <= last && (is_blank(lines[i].text) || ltrim(lines[i].text).starts_with("#"))) ++i;
  if (i > last) return {};
  auto t = ltrim(lines[i].text);
  if (!t.empty() && (t.front() == 'r' || t.front() == 'R' || t.front() == 'u')) t.remove_prefix(1);
  if (t.empty() || (t.front() != '"' && t.front() != '\'')) return {};
  const char q = t.front();
  const std::string triple(3, q);
  if (t.starts_with(triple)) {
    std::string_view rest = t.substr(3);
    std::vector<std::string> parts;
    if (auto close = rest.find(triple); close != std::string_view::npos) {
      return std::string(trim(rest.substr(0, close)));
    }
    parts.emplace_back(trim(rest));
    for (++i; i <= last; ++i) {
      std::string_view body = lines[i].text;
      if (auto close = body.find(triple); close != std::string_view::npos) {
        parts.emplace_back(trim(body.substr(0, close)));
        break;
      }
      parts.emplace_back(trim(body));
    }
    while (!parts.empty() && parts.front().empty()) parts.erase(parts.begin());
    while (!parts.empty() && parts.back().empty()) parts.pop_back();
    return join(parts, "\n");
  }
  auto rest = t.substr(1);
  auto close = rest.find(q);
  if (close == std::string_view::npos) return {};
  return std::string(trim(rest.substr(0, close)));
}

}  // namespace

bool CodeBlock::terminated() const noexcept {
  return !std::string_view(language_tag).ends_with(kUnterminatedMarker);
}

std::string_view CodeBlock::base_tag() const noexcept {
  std::string_view tag = language_tag;
  if (tag.ends_with(kUnterminatedMarker)) tag.remove_suffix(kUnterminatedMarker.size());
  return tag;
}

std::vector<CodeBlock> extract_code_blocks(std::string_view markdown) {
  std::vector<CodeBlock> blocks;
  const auto lines = split_lines(markdown);
  bool inside = false;
  CodeBlock current;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const Line& line = lines[i];
    if (!inside) {
      auto t = ltrim(line.text);
      if (!t.starts_with("```")) continue;
      current = CodeBlock{};
      current.language_tag = std::string(trim(t.substr(3)));
      current.span_begin = i + 1 < lines.size() ? lines[i + 1].begin : markdown.size();
      inside = true;
      continue;
    }
    if (is_closing_fence(line.text)) {
      std::size_t end = line.begin;
      if (end > current.span_begin) {
        --end;  // the newline ending the last body line
        if (end > current.span_begin && markdown[end - 1] == '\r') --end;
      }
      current.span_end = std::max(end, current.span_begin);
      current.body = std::string(markdown.substr(current.span_begin, current.span_end - current.span_begin));
      blocks.push_back(std::move(current));
      inside = false;
    }
  }
  if (inside) {
    std::size_t end = markdown.size();
    while (end > current.span_begin && (markdown[end - 1] == '\n' || markdown[end - 1] == '\r')) --end;
    current.span_end = end;
    current.body = std::string(markdown.substr(current.span_begin, end - current.span_begin));
    current.language_tag += kUnterminatedMarker;
    blocks.push_back(std::move(current));
  }
  return blocks;
}

std::string extract_primary_solution(std::string_view markdown, std::string_view guest_tag) {
  std::string out;
  bool any = false;
  for (const auto& block : extract_code_blocks(markdown)) {
    const auto tag = block.base_tag();
    if (!tag.empty() && !iequals(tag, guest_tag)) continue;
    if (any) out += "\n\n";
    out += block.body;
    any = true;
  }
  return out;
}

std::string fence(std::string_view code, std::string_view guest_tag) {
  std::string out = "```";
  out += guest_tag;
  out += '\n';
  out += code;
  out += "\n```";
  return out;
}

std::vector<TopLevelDefinition> scan_top_level_definitions(std::string_view code) {
  const auto lines = split_lines(code);
  std::vector<TopLevelDefinition> defs;

  struct Open {
    std::size_t start = 0;
    std::size_t def_line = 0;
    std::size_t last_content = 0;
  };
  std::optional<Open> open;
  std::optional<std::size_t> pending_decorator;

  auto close = [&] {
    if (!open) return;
    const Line& head = lines[open->def_line];
    TopLevelDefinition d;
    const auto text = head.text;
    if (text.starts_with("class ")) {
      d.kind = TopLevelDefinition::Kind::class_;
      d.name = identifier_after(text, "class");
    } else if (text.starts_with("async ")) {
      d.name = identifier_after(ltrim(text.substr(5)), "def");
    } else {
      d.name = identifier_after(text, "def");
    }
    d.signature = std::string(trim(text));
    d.first_line = open->start;
    const std::size_t b = lines[open->start].begin;
    const std::size_t e = lines[open->last_content].end;
    d.code = std::string(code.substr(b, e - b));
    if (!d.code.empty() && d.code.back() == '\r') d.code.pop_back();

    // Body starts after the line that closes the (possibly multi-line) header.
    std::size_t body = open->def_line;
    const bool one_liner = !trim(text).ends_with(":") &&
                           std::count(text.begin(), text.end(), '(') ==
                               std::count(text.begin(), text.end(), ')');
    if (!one_liner) {
      while (body < open->last_content && !trim(lines[body].text).ends_with(":")) ++body;
      d.description = docstring_at(lines, body + 1, open->last_content);
    }
    if (d.description.empty() && open->start > 0) {
      std::vector<std::string> comments;
      for (std::size_t j = open->start; j-- > 0;) {
        if (classify(lines[j].text) != LineKind::comment) break;
        comments.push_back(strip_comment_marker(lines[j].text));
      }
      std::reverse(comments.begin(), comments.end());
      d.description = std::string(trim(join(comments, "\n")));
    }
    defs.push_back(std::move(d));
    open.reset();
  };

  StringState strings;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto text = lines[i].text;
    if (strings.inside()) {
      if (open) open->last_content = i;
      strings.feed(text);
      continue;
    }
    switch (classify(text)) {
      case LineKind::blank:
      case LineKind::comment:
        break;
      case LineKind::indented:
        if (open) open->last_content = i;
        break;
      case LineKind::decorator:
        close();
        if (!pending_decorator) pending_decorator = i;
        break;
      case LineKind::definition:
        close();
        open = Open{pending_decorator.value_or(i), i, i};
        pending_decorator.reset();
        break;
      case LineKind::statement:
        close();
        pending_decorator.reset();
        break;
    }
    strings.feed(text);
  }
  close();
  return defs;
}

std::vector<std::string> top_level_imports(std::string_view code) {
  std::vector<std::string> out;
  StringState strings;
  for (const auto& line : split_lines(code)) {
    if (!strings.inside()) {
      const auto t = line.text;
      if (t.starts_with("import ") || (t.starts_with("from ") && t.find(" import ") != std::string_view::npos)) {
        out.emplace_back(trim(t));
      }
    }
    strings.feed(line.text);
  }
  return out;
}

std::vector<FunctionModule> split_function_modules(std::string_view code, ModuleSource source) {
  const auto defs = scan_top_level_definitions(code);
  if (defs.empty()) throw ParseFailure("no top-level function definition found");
  const auto imports = top_level_imports(code);
  const std::string prelude = imports.empty() ? std::string{} : join(imports, "\n") + "\n\n";
  std::vector<FunctionModule> modules;
  modules.reserve(defs.size());
  for (const auto& d : defs) {
    FunctionModule m;
    m.name = d.name;
    m.signature = d.signature;
    m.description = d.description;
    m.code = prelude + d.code;
    m.source = source;
    m.module_id = derive_module_id(m.code, source);
    modules.push_back(std::move(m));
  }
  return modules;
}

std::vector<FunctionModule> parse_function_modules(std::string_view markdown,
                                                   std::string_view guest_tag,
                                                   ModuleSource source) {
  const std::string code = extract_primary_solution(markdown, guest_tag);
  if (code.empty()) throw ParseFailure("no guest code block found");
  return split_function_modules(code, source);
}

}  // namespace amrevol
