#include "nlf/curate/service.hpp"

#include <mutex>

#include <fmt/format.h>
#include <httplib.h>

namespace nlf::curate {

namespace {

using dataset::CurationError;

Reply error(int status, const std::string& message) { return {status, Json{{"error", message}}}; }

Reply from_curation_error(const CurationError& e) { return error(status_for(e), e.what()); }

std::optional<Json> parse_body(const std::string& body, Reply& failure) {
  try {
    auto j = Json::parse(body.empty() ? std::string("{}") : body);
    if (!j.is_object()) {
      failure = error(400, "request body must be a JSON object");
      return std::nullopt;
    }
    return j;
  } catch (const Json::exception& e) {
    failure = error(400, fmt::format("malformed JSON: {}", e.what()));
    return std::nullopt;
  }
}

Json item_json(const dataset::CurationRound& round, const dataset::Candidate& c) {
  Json j{{"id", c.id},
         {"round_index", round.round_index},
         {"question", c.question},
         {"response", c.response},
         {"feedback", c.feedback},
         {"status", "pending"}};
  if (auto it = round.verdicts.find(c.id); it != round.verdicts.end()) {
    if (it->second.kind == dataset::VerdictKind::Accept) {
      j["status"] = "accepted";
    } else {
      j["status"] = "rejected";
      j["tag"] = it->second.tag;
    }
  }
  if (auto it = round.removed_ids.find(c.id); it != round.removed_ids.end()) j["removed_by"] = it->second;
  return j;
}

bool parse_size(const std::string& text, std::size_t& out) {
  if (text.empty() || text.size() > 9) return false;
  for (char c : text) {
    if (c < '0' || c > '9') return false;
  }
  out = std::stoul(text);
  return true;
}

}  // namespace

int status_for(const CurationError& e) {
  switch (e.code()) {
    case CurationError::Code::UnknownRound:
    case CurationError::Code::UnknownItem:
      return 404;
    case CurationError::Code::MissingTag:
    case CurationError::Code::UnknownTag:
      return 422;
    case CurationError::Code::Conflict:
    case CurationError::Code::Closed:
    case CurationError::Code::Unresolved:
      return 409;
  }
  return 400;
}

CurationService::CurationService(ServiceOptions options, dataset::JudgeClassifier classifier)
    : options_(std::move(options)), classifier_(std::move(classifier)) {
  if (options_.audit_log.empty()) throw InvalidArgument("curation service needs an audit log path");
  if (options_.default_page_size == 0 || options_.default_page_size > options_.max_page_size) {
    throw InvalidArgument("default page size must be in [1, max_page_size]");
  }
  std::vector<Json> events;
  if (fs::exists(options_.audit_log)) events = read_jsonl_tolerant(options_.audit_log);
  audit_ = std::make_unique<JsonlAppender>(options_.audit_log);
  state_ = dataset::CurationState::replay(events, [this](const Json& e) { audit_->append(e); });
}

bool CurationService::seed(const std::vector<dataset::Candidate>& candidates,
                           const std::map<std::string, dataset::FailurePredicate>& tags) {
  std::unique_lock lock(mu_);
  if (!state_.rounds().empty()) return false;
  for (const auto& [name, predicate] : tags) state_.register_tag(name, predicate);
  state_.open_first_round(candidates);
  return true;
}

bool CurationService::authorized(const std::string& header) const {
  if (!options_.bearer_token) return true;
  return header == "Bearer " + *options_.bearer_token;
}

Reply CurationService::list_rounds() const {
  std::shared_lock lock(mu_);
  Json rounds = Json::array();
  for (const auto& [index, r] : state_.rounds()) {
    rounds.push_back({{"round_index", index},
                      {"candidates", r.candidates.size()},
                      {"unresolved", r.unresolved()},
                      {"advanced", r.advanced},
                      {"removed", r.removed_ids.size()}});
  }
  return {200, Json{{"rounds", rounds}}};
}

Reply CurationService::list_items(int round, const std::string& cursor, const std::string& limit) const {
  std::size_t page = options_.default_page_size;
  if (!limit.empty() && (!parse_size(limit, page) || page == 0 || page > options_.max_page_size)) {
    return error(400, fmt::format("limit must be an integer in [1, {}]", options_.max_page_size));
  }
  std::shared_lock lock(mu_);
  try {
    const auto& r = state_.round(round);
    Json items = Json::array();
    auto it = cursor.empty() ? r.candidates.begin() : r.candidates.upper_bound(cursor);
    for (; it != r.candidates.end() && items.size() < page; ++it) items.push_back(item_json(r, it->second));
    Json next = nullptr;
    if (it != r.candidates.end() && !items.empty()) next = items.back().at("id");
    return {200, Json{{"round_index", round}, {"items", items}, {"next_cursor", next}}};
  } catch (const CurationError& e) {
    return from_curation_error(e);
  }
}

Reply CurationService::list_tags() const {
  std::shared_lock lock(mu_);
  Json tags = Json::object();
  for (const auto& [name, p] : state_.tags()) tags[name] = p;
  return {200, Json{{"tags", tags}}};
}

Reply CurationService::register_tag(const std::string& body) {
  Reply failure;
  const auto j = parse_body(body, failure);
  if (!j) return failure;
  std::string name;
  dataset::FailurePredicate predicate;
  try {
    name = require_string(*j, "tag");
    predicate = j->at("predicate").get<dataset::FailurePredicate>();
    predicate.validate();
  } catch (const std::exception& e) {
    return error(422, e.what());
  }
  std::unique_lock lock(mu_);
  try {
    state_.register_tag(name, predicate);
    return {200, Json{{"tag", name}, {"predicate", predicate}}};
  } catch (const CurationError& e) {
    return from_curation_error(e);
  } catch (const InvalidArgument& e) {
    return error(422, e.what());
  }
}

Reply CurationService::post_verdict(int round, const std::string& body) {
  Reply failure;
  const auto j = parse_body(body, failure);
  if (!j) return failure;
  std::string id;
  dataset::Verdict verdict;
  try {
    id = require_string(*j, "id");
    const auto kind = require_string(*j, "verdict");
    if (kind == "accept") {
      verdict.kind = dataset::VerdictKind::Accept;
    } else if (kind == "reject") {
      verdict.kind = dataset::VerdictKind::Reject;
    } else {
      return error(422, fmt::format("verdict must be 'accept' or 'reject', got '{}'", kind));
    }
    if (j->contains("tag") && !j->at("tag").is_null()) verdict.tag = j->at("tag").get<std::string>();
  } catch (const std::exception& e) {
    return error(422, e.what());
  }
  std::unique_lock lock(mu_);
  try {
    const auto result = state_.record_verdict(round, id, verdict);
    const auto& r = state_.round(round);
    auto item = item_json(r, r.candidates.at(id));
    item["duplicate"] = result == dataset::VerdictResult::Duplicate;
    return {200, item};
  } catch (const CurationError& e) {
    return from_curation_error(e);
  }
}

Reply CurationService::advance(int round, bool force, const std::string& body) {
  Reply failure;
  const auto j = parse_body(body, failure);
  if (!j) return failure;
  std::vector<dataset::Candidate> fresh;
  try {
    if (j->contains("fresh")) fresh = j->at("fresh").get<std::vector<dataset::Candidate>>();
  } catch (const std::exception& e) {
    return error(422, e.what());
  }
  std::unique_lock lock(mu_);
  try {
    const auto s = state_.advance(round, force, fresh, classifier_);
    return {200, Json{{"removed_count", s.removed_count},
                      {"survivor_count", s.survivor_count},
                      {"new_round_index", s.new_round_index}}};
  } catch (const CurationError& e) {
    return from_curation_error(e);
  }
}

Json CurationService::snapshot() const {
  std::shared_lock lock(mu_);
  return state_.snapshot();
}

void CurationService::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  auto guarded = [this, send](auto handler) {
    return [this, send, handler](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req.get_header_value("Authorization"))) {
        send(res, error(401, "missing or wrong bearer token"));
        return;
      }
      send(res, handler(req));
    };
  };
  auto round_of = [](const httplib::Request& req) { return std::stoi(req.matches[1].str()); };

  server.Get("/rounds", guarded([this](const httplib::Request&) { return list_rounds(); }));
  server.Get("/tags", guarded([this](const httplib::Request&) { return list_tags(); }));
  server.Post("/tags", guarded([this](const httplib::Request& req) { return register_tag(req.body); }));
  server.Get(R"(/rounds/(\d{1,9})/items)", guarded([this, round_of](const httplib::Request& req) {
               return list_items(round_of(req), req.get_param_value("cursor"), req.get_param_value("limit"));
             }));
  server.Post(R"(/rounds/(\d{1,9})/verdicts)", guarded([this, round_of](const httplib::Request& req) {
                return post_verdict(round_of(req), req.body);
              }));
  server.Post(R"(/rounds/(\d{1,9})/advance)", guarded([this, round_of](const httplib::Request& req) {
                const auto f = req.get_param_value("force");
                return advance(round_of(req), f == "1" || f == "true", req.body);
              }));
}

}  // namespace nlf::curate
