#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amrevol/domain.hpp"
#include "amrevol/error.hpp"

namespace amrevol {

/// One line of canonical JSONL: compact, UTF-8, no trailing newline.
std::string dump_line(const Json& j);

Json make_header(std::string_view kind, Json extra = Json::object());

/// True when `j` is a file header line ({"kind": ..., "version": ...}).
bool is_header(const Json& j);

struct JsonlRecord {
  std::size_t line = 0;  // 1-based line number in the file
  Json value;
};

struct JsonlFile {
  std::optional<Json> header;
  std::vector<JsonlRecord> records;
};

/// Reads a JSONL file; the header line is optional. A header with a different
/// kind (when `expected_kind` is non-empty) or version raises VersionMismatch;
/// an unparsable line raises CorruptRecord with its line number.
JsonlFile read_jsonl(const std::filesystem::path& path, std::string_view expected_kind = {});

/// Writes header + records to a temp file then renames it over `path`.
void write_jsonl(const std::filesystem::path& path, const Json& header,
                 const std::vector<Json>& records);

/// Line-at-a-time appender; each append is flushed.
class JsonlAppender {
 public:
  explicit JsonlAppender(const std::filesystem::path& path);
  void append(const Json& j);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

template <class T>
std::vector<T> decode_records(const JsonlFile& file) {
  std::vector<T> out;
  out.reserve(file.records.size());
  for (const auto& rec : file.records) {
    try {
      out.push_back(decode<T>(rec.value));
    } catch (const std::exception& e) {
      throw CorruptRecord(rec.line, e.what());
    }
  }
  return out;
}

template <class T>
std::vector<Json> encode_records(const std::vector<T>& items) {
  std::vector<Json> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(encode(item));
  return out;
}

std::vector<Instruction> load_instructions(const std::filesystem::path& path);
void save_instructions(const std::filesystem::path& path, const std::vector<Instruction>& items);

}  // namespace amrevol
