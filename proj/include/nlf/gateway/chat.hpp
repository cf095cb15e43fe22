#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlf/core/json.hpp"

namespace nlf::gateway {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;

  /// Throws InvalidArgument unless messages are nonempty, the first non-system message
  /// is from the user, temperature >= 0 and max_tokens > 0.
  void validate() const;

  static ChatRequest single_turn(std::string model_id, std::string prompt, double temperature = 0.0,
                                 int max_tokens = 1024);
};

/// {model, messages, temperature, max_tokens}: both the HTTP body and the fixture key.
Json canonical_request(const ChatRequest& request);
ChatRequest request_from_json(const Json& j);
std::string request_hash(const ChatRequest& request);

struct RetryPolicy {
  int max_attempts = 4;
  int backoff_base_ms = 500;
  int backoff_cap_ms = 20000;
};

struct ProviderConfig {
  std::string endpoint_url;
  std::string auth_env_var;
  int max_concurrency = 4;
  RetryPolicy retry_policy;
  int requests_per_minute = 60;
  int timeout_ms = 120000;

  void validate() const;
  /// Digest of the behavioural fields, recorded in run manifests.
  [[nodiscard]] std::string config_hash() const;
};

void to_json(Json& j, const ProviderConfig& cfg);
void from_json(const Json& j, ProviderConfig& cfg);

struct ChatResponse {
  std::string content;
  std::int64_t provider_latency_ms = 0;
  int attempt_count = 0;
};

class GatewayError : public Error {
 public:
  using Error::Error;
};

/// Timeouts, connection failures, HTTP 429 and 5xx. Retried by the client.
class TransientError : public GatewayError {
 public:
  explicit TransientError(const std::string& what, int status = 0)
      : GatewayError(what), status_(status) {}
  [[nodiscard]] int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Missing credentials or HTTP 401/403. Never retried.
class AuthError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class MalformedProviderReply : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Non-retryable HTTP status other than auth failures (e.g. 400, 404).
class RequestRejected : public GatewayError {
 public:
  RequestRejected(const std::string& what, int status) : GatewayError(what), status_(status) {}
  [[nodiscard]] int status() const noexcept { return status_; }

 private:
  int status_;
};

class ExhaustedRetries : public GatewayError {
 public:
  ExhaustedRetries(int attempts, std::string last_cause);
  [[nodiscard]] int attempts() const noexcept { return attempts_; }
  [[nodiscard]] const std::string& last_cause() const noexcept { return last_cause_; }

 private:
  int attempts_;
  std::string last_cause_;
};

class FixtureMiss : public GatewayError {
 public:
  FixtureMiss(std::string request_hash, std::string nearest_key);
  [[nodiscard]] const std::string& request_hash() const noexcept { return hash_; }
  [[nodiscard]] const std::string& nearest_key() const noexcept { return nearest_; }

 private:
  std::string hash_;
  std::string nearest_;
};

}  // namespace nlf::gateway
