#include "nlf/gateway/chat.hpp"

#include <fmt/format.h>

#include "nlf/core/util.hpp"

namespace nlf::gateway {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System:
      return "system";
    case Role::User:
      return "user";
    case Role::Assistant:
      return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::System;
  if (text == "user") return Role::User;
  if (text == "assistant") return Role::Assistant;
  throw InvalidArgument(fmt::format("unknown chat role '{}'", text));
}

void ChatRequest::validate() const {
  if (messages.empty()) throw InvalidArgument("chat request has no messages");
  for (const auto& m : messages) {
    if (m.role == Role::System) continue;
    if (m.role != Role::User) throw InvalidArgument("first non-system message must be from the user");
    break;
  }
  if (!(temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
  if (max_tokens <= 0) throw InvalidArgument("max_tokens must be positive");
}

ChatRequest ChatRequest::single_turn(std::string model_id, std::string prompt, double temperature,
                                     int max_tokens) {
  ChatRequest req;
  req.model_id = std::move(model_id);
  req.messages.push_back({Role::User, std::move(prompt)});
  req.temperature = temperature;
  req.max_tokens = max_tokens;
  return req;
}

Json canonical_request(const ChatRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  return Json{{"model", request.model_id},
              {"messages", std::move(messages)},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
}

ChatRequest request_from_json(const Json& j) {
  ChatRequest req;
  req.model_id = j.at("model").get<std::string>();
  for (const auto& m : j.at("messages")) {
    req.messages.push_back({parse_role(m.at("role").get<std::string>()),
                            m.at("content").get<std::string>()});
  }
  req.temperature = j.at("temperature").get<double>();
  req.max_tokens = j.at("max_tokens").get<int>();
  return req;
}

std::string request_hash(const ChatRequest& request) {
  return sha256_hex(canonical_request(request).dump());
}

void ProviderConfig::validate() const {
  if (max_concurrency < 1) throw InvalidArgument("max_concurrency must be >= 1");
  if (retry_policy.max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
  if (retry_policy.backoff_base_ms < 0 || retry_policy.backoff_cap_ms < 0) {
    throw InvalidArgument("backoff delays must be >= 0");
  }
  if (requests_per_minute < 1) throw InvalidArgument("requests_per_minute must be >= 1");
}

std::string ProviderConfig::config_hash() const {
  Json j = *this;
  return sha256_hex(j.dump());
}

void to_json(Json& j, const ProviderConfig& cfg) {
  j = Json{{"endpoint_url", cfg.endpoint_url},
           {"auth_env_var", cfg.auth_env_var},
           {"max_concurrency", cfg.max_concurrency},
           {"retry_policy",
            {{"max_attempts", cfg.retry_policy.max_attempts},
             {"backoff_base_ms", cfg.retry_policy.backoff_base_ms},
             {"backoff_cap_ms", cfg.retry_policy.backoff_cap_ms}}},
           {"requests_per_minute", cfg.requests_per_minute},
           {"timeout_ms", cfg.timeout_ms}};
}

void from_json(const Json& j, ProviderConfig& cfg) {
  cfg = {};
  cfg.endpoint_url = j.value("endpoint_url", "");
  cfg.auth_env_var = j.value("auth_env_var", "");
  cfg.max_concurrency = j.value("max_concurrency", cfg.max_concurrency);
  cfg.requests_per_minute = j.value("requests_per_minute", cfg.requests_per_minute);
  cfg.timeout_ms = j.value("timeout_ms", cfg.timeout_ms);
  if (auto it = j.find("retry_policy"); it != j.end()) {
    cfg.retry_policy.max_attempts = it->value("max_attempts", cfg.retry_policy.max_attempts);
    cfg.retry_policy.backoff_base_ms =
        it->value("backoff_base_ms", cfg.retry_policy.backoff_base_ms);
    cfg.retry_policy.backoff_cap_ms = it->value("backoff_cap_ms", cfg.retry_policy.backoff_cap_ms);
  }
  cfg.validate();
}

ExhaustedRetries::ExhaustedRetries(int attempts, std::string last_cause)
    : GatewayError(fmt::format("gave up after {} attempts: {}", attempts, last_cause)),
      attempts_(attempts),
      last_cause_(std::move(last_cause)) {}

FixtureMiss::FixtureMiss(std::string request_hash, std::string nearest_key)
    : GatewayError(fmt::format("no fixture for request {} (nearest recorded key: {})", request_hash,
                               nearest_key.empty() ? "<none>" : nearest_key)),
      hash_(std::move(request_hash)),
      nearest_(std::move(nearest_key)) {}

}  // namespace nlf::gateway
