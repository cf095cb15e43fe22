#include "nlf/core/io.hpp"

#include <sstream>

#include <fmt/format.h>

namespace nlf {

namespace {

std::vector<Json> parse_lines(const fs::path& path, bool tolerate_torn_tail) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);

  std::vector<Json> rows;
  rows.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& text = lines[i];
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(text));
    } catch (const Json::parse_error& e) {
      if (tolerate_torn_tail) continue;
      throw IoError(fmt::format("{}:{}: {}", path.string(), i + 1, e.what()));
    }
  }
  return rows;
}

}  // namespace

std::vector<Json> read_jsonl(const fs::path& path) { return parse_lines(path, false); }

std::vector<Json> read_jsonl_tolerant(const fs::path& path) { return parse_lines(path, true); }

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError(fmt::format("short write to {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
  std::string buffer;
  for (const auto& row : rows) {
    buffer += row.dump();
    buffer += '\n';
  }
  write_text(path, buffer);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

JsonlAppender::JsonlAppender(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  bool needs_newline = false;
  if (fs::exists(path) && fs::file_size(path) > 0) {
    std::ifstream in(path, std::ios::binary);
    in.seekg(-1, std::ios::end);
    needs_newline = in.get() != '\n';
  }
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw IoError(fmt::format("cannot append to {}", path.string()));
  if (needs_newline) out_ << '\n' << std::flush;
}

void JsonlAppender::append(const Json& row) {
  const auto text = row.dump() + "\n";
  std::lock_guard lock(mutex_);
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
  out_.flush();
  if (!out_) throw IoError("append failed");
}

}  // namespace nlf
