#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlf/core/io.hpp"
#include "nlf/gateway/chat.hpp"

namespace nlf::gateway {

/// One attempt at a chat completion. Implementations signal retryable failures with
/// TransientError; everything else propagates unchanged through the client.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string send(const ChatRequest& request) = 0;
};

/// Chat-completions over HTTP(S): POST {model, messages, temperature, max_tokens},
/// reply read from choices[0].message.content.
class HttpProvider final : public Provider {
 public:
  /// Resolves the bearer token from cfg.auth_env_var; throws AuthError if it is unset.
  explicit HttpProvider(ProviderConfig cfg);

  std::string send(const ChatRequest& request) override;

  /// Pulls the first choice's content out of a provider reply body.
  static std::string extract_content(std::string_view body);

 private:
  ProviderConfig cfg_;
  std::string token_;
  std::string base_;
  std::string path_;
};

/// Replays a recorded archive: JSON-Lines of {request_hash, request, reply}.
class FixtureProvider final : public Provider {
 public:
  explicit FixtureProvider(const fs::path& archive);

  std::string send(const ChatRequest& request) override;
  [[nodiscard]] std::size_t size() const noexcept { return replies_.size(); }

 private:
  std::unordered_map<std::string, std::string> replies_;
  std::vector<std::pair<std::string, std::string>> keys_;  // (hash, canonical request)
};

/// Calls a function per request; `call_index` counts from 0 across the provider's lifetime.
class ScriptedProvider final : public Provider {
 public:
  using Script = std::function<std::string(const ChatRequest&, int call_index)>;
  explicit ScriptedProvider(Script script) : script_(std::move(script)) {}

  std::string send(const ChatRequest& request) override;
  [[nodiscard]] int calls() const noexcept { return calls_.load(); }

 private:
  Script script_;
  std::atomic<int> calls_{0};
};

/// Forwards to another provider and appends every new (request, reply) pair to a fixture
/// archive, so a later run can replay it with FixtureProvider.
class RecordingProvider final : public Provider {
 public:
  RecordingProvider(std::shared_ptr<Provider> inner, const fs::path& archive);

  std::string send(const ChatRequest& request) override;

 private:
  std::shared_ptr<Provider> inner_;
  JsonlAppender out_;
  std::mutex mutex_;
  std::set<std::string> recorded_;
};

}  // namespace nlf::gateway
