#include "amrevol/jsonl.hpp"

#include <system_error>

#include "amrevol/error.hpp"

namespace amrevol {

std::string dump_line(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

Json make_header(std::string_view kind, Json extra) {
  Json h;
  h["kind"] = kind;
  h["version"] = kFormatVersion;
  for (auto it = extra.begin(); it != extra.end(); ++it) h[it.key()] = it.value();
  return h;
}

bool is_header(const Json& j) {
  return j.is_object() && j.contains("kind") && j.contains("version") && j["kind"].is_string();
}

JsonlFile read_jsonl(const std::filesystem::path& path, std::string_view expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  JsonlFile file;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Json value;
    try {
      value = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw CorruptRecord(line_no, e.what());
    }
    if (first && is_header(value)) {
      if (!value["version"].is_number_integer() || value["version"].get<int>() != kFormatVersion) {
        throw VersionMismatch(path.string() + ": unsupported format version " +
                              value["version"].dump());
      }
      if (!expected_kind.empty() && value["kind"].get<std::string>() != expected_kind) {
        throw VersionMismatch(path.string() + ": expected a '" + std::string(expected_kind) +
                              "' file, found '" + value["kind"].get<std::string>() + "'");
      }
      file.header = std::move(value);
    } else {
      file.records.push_back({line_no, std::move(value)});
    }
    first = false;
  }
  if (in.bad()) throw IoError("read error on " + path.string());
  return file;
}

void write_jsonl(const std::filesystem::path& path, const Json& header,
                 const std::vector<Json>& records) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    if (!header.is_null()) out << dump_line(header) << '\n';
    for (const auto& r : records) out << dump_line(r) << '\n';
    out.flush();
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

JsonlAppender::JsonlAppender(const std::filesystem::path& path) : path_(path) {
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw IoError("cannot append to " + path.string());
}

void JsonlAppender::append(const Json& j) {
  out_ << dump_line(j) << '\n';
  out_.flush();
  if (!out_) throw IoError("write failed on " + path_.string());
}

std::vector<Instruction> load_instructions(const std::filesystem::path& path) {
  auto items = decode_records<Instruction>(read_jsonl(path, "instructions"));
  for (auto& item : items) {
    if (item.id.empty()) item.id = derive_instruction_id(item.text);
  }
  return items;
}

void save_instructions(const std::filesystem::path& path, const std::vector<Instruction>& items) {
  write_jsonl(path, make_header("instructions"), encode_records(items));
}

}  // namespace amrevol
