#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include "nlf/core/io.hpp"
#include "nlf/core/json.hpp"
#include "nlf/dataset/curation.hpp"

namespace httplib {
class Server;
}

namespace nlf::curate {

struct Reply {
  int status = 200;
  Json body = Json::object();
};

struct ServiceOptions {
  std::filesystem::path audit_log;
  /// When set, every request must carry "Authorization: Bearer <token>".
  std::optional<std::string> bearer_token;
  std::size_t default_page_size = 50;
  std::size_t max_page_size = 500;
};

/// Curation loop behind the review UI. State lives in an append-only audit log that is
/// replayed on startup; reads may run concurrently, writes take an exclusive lock.
class CurationService {
 public:
  CurationService(ServiceOptions options, dataset::JudgeClassifier classifier = {});

  /// Opens round 0 and registers tags unless the audit log already holds a first round.
  /// Returns false when the log was already seeded.
  bool seed(const std::vector<dataset::Candidate>& candidates,
            const std::map<std::string, dataset::FailurePredicate>& tags);

  [[nodiscard]] bool authorized(const std::string& authorization_header) const;

  Reply list_rounds() const;
  Reply list_items(int round, const std::string& cursor, const std::string& limit) const;
  Reply list_tags() const;
  Reply register_tag(const std::string& body);
  Reply post_verdict(int round, const std::string& body);
  /// Body may hold {"fresh": [candidates]} to add to the next round.
  Reply advance(int round, bool force, const std::string& body);

  [[nodiscard]] Json snapshot() const;

  /// Registers every route on `server`.
  void mount(httplib::Server& server);

 private:
  ServiceOptions options_;
  dataset::JudgeClassifier classifier_;
  std::unique_ptr<JsonlAppender> audit_;
  mutable std::shared_mutex mu_;
  dataset::CurationState state_;
};

/// Status code for a curation error (404 unknown round/item, 409 conflict/closed/unresolved,
/// 422 missing or unknown tag).
int status_for(const dataset::CurationError& e);

}  // namespace nlf::curate
