#include <httplib.h>

#include <cstdlib>

#include <fmt/format.h>

#include "nlf/gateway/provider.hpp"

namespace nlf::gateway {

namespace {

// Splits "https://host:port/v1/chat/completions" into ("https://host:port", "/v1/chat/completions").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw InvalidArgument(fmt::format("endpoint_url '{}' lacks a scheme", url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpProvider::HttpProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::tie(base_, path_) = split_url(cfg_.endpoint_url);
  if (!cfg_.auth_env_var.empty()) {
    const char* value = std::getenv(cfg_.auth_env_var.c_str());
    if (value == nullptr || *value == '\0') {
      throw AuthError(fmt::format("credentials missing: environment variable {} is not set",
                                  cfg_.auth_env_var));
    }
    token_ = value;
  }
}

std::string HttpProvider::extract_content(std::string_view body) {
  Json reply;
  try {
    reply = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw MalformedProviderReply(fmt::format("reply is not JSON: {}", e.what()));
  }
  const auto choices = reply.find("choices");
  if (choices == reply.end() || !choices->is_array() || choices->empty()) {
    throw MalformedProviderReply("reply has no choices");
  }
  const auto& first = (*choices)[0];
  const auto message = first.find("message");
  if (message == first.end() || !message->contains("content") ||
      !(*message)["content"].is_string()) {
    throw MalformedProviderReply("first choice has no message content");
  }
  return (*message)["content"].get<std::string>();
}

std::string HttpProvider::send(const ChatRequest& request) {
  httplib::Client client(base_);
  const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  const auto body = canonical_request(request).dump();
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) {
    throw TransientError(fmt::format("transport error: {}", httplib::to_string(res.error())));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw AuthError(fmt::format("provider rejected credentials (HTTP {})", status));
  }
  if (status == 429 || status >= 500) {
    throw TransientError(fmt::format("provider returned HTTP {}", status), status);
  }
  if (status < 200 || status >= 300) {
    throw RequestRejected(fmt::format("provider returned HTTP {}: {}", status, res->body), status);
  }
  return extract_content(res->body);
}

}  // namespace nlf::gateway
