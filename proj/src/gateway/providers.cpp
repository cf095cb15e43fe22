#include <algorithm>

#include <fmt/format.h>

#include "nlf/gateway/provider.hpp"

namespace nlf::gateway {

namespace {

// Shared prefix plus shared suffix: cheap closeness score for pointing at the recorded
// request a miss most likely meant.
std::size_t overlap(std::string_view a, std::string_view b) {
  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix]) {
    ++suffix;
  }
  return prefix + suffix;
}

}  // namespace

FixtureProvider::FixtureProvider(const fs::path& archive) {
  for (const auto& row : read_jsonl(archive)) {
    const auto request = request_from_json(row.at("request"));
    const auto hash = request_hash(request);
    const auto stated = row.value("request_hash", hash);
    if (stated != hash) {
      throw IoError(fmt::format("fixture {} has request_hash {} but its request hashes to {}",
                                archive.string(), stated, hash));
    }
    auto [it, inserted] = replies_.emplace(hash, row.at("reply").get<std::string>());
    if (inserted) keys_.emplace_back(hash, canonical_request(request).dump());
  }
}

std::string FixtureProvider::send(const ChatRequest& request) {
  const auto hash = request_hash(request);
  if (auto it = replies_.find(hash); it != replies_.end()) return it->second;

  const auto wanted = canonical_request(request).dump();
  std::string nearest;
  std::size_t best = 0;
  for (const auto& [key, text] : keys_) {
    const auto score = overlap(wanted, text);
    if (nearest.empty() || score > best) {
      best = score;
      nearest = key;
    }
  }
  throw FixtureMiss(hash, nearest);
}

std::string ScriptedProvider::send(const ChatRequest& request) {
  const int index = calls_.fetch_add(1);
  return script_(request, index);
}

RecordingProvider::RecordingProvider(std::shared_ptr<Provider> inner, const fs::path& archive)
    : inner_(std::move(inner)), out_(archive) {
  if (fs::exists(archive)) {
    for (const auto& row : read_jsonl_tolerant(archive)) {
      recorded_.insert(row.value("request_hash", std::string{}));
    }
  }
}

std::string RecordingProvider::send(const ChatRequest& request) {
  auto reply = inner_->send(request);
  const auto hash = request_hash(request);
  std::lock_guard lock(mutex_);
  if (recorded_.insert(hash).second) {
    out_.append(Json{{"request_hash", hash}, {"request", canonical_request(request)}, {"reply", reply}});
  }
  return reply;
}

}  // namespace nlf::gateway
