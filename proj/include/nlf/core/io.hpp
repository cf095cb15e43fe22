#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "nlf/core/json.hpp"

namespace nlf {

namespace fs = std::filesystem;

/// Reads one JSON value per nonblank line. Throws IoError with the line number on bad input.
std::vector<Json> read_jsonl(const fs::path& path);

/// Like read_jsonl but skips lines that fail to parse, which is what a crash mid-append leaves.
std::vector<Json> read_jsonl_tolerant(const fs::path& path);

/// Writes the whole file through a temporary sibling and rename, so readers never see a partial file.
void write_jsonl(const fs::path& path, const std::vector<Json>& rows);
void write_text(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);

/// Append-only JSON-Lines sink. Each append is flushed before returning; safe across threads.
/// Opening a file whose last line is torn terminates that line first.
class JsonlAppender {
 public:
  explicit JsonlAppender(const fs::path& path);

  void append(const Json& row);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

}  // namespace nlf
