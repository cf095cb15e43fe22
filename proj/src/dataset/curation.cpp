#include "nlf/dataset/curation.hpp"

#include <fmt/format.h>

#include "nlf/core/util.hpp"
#include "nlf/judge/parse.hpp"

namespace nlf::dataset {

void to_json(Json& j, const Candidate& c) {
  j = Json{{"id", c.id}, {"question", c.question}, {"response", c.response}, {"feedback", c.feedback}};
}

void from_json(const Json& j, Candidate& c) {
  c.id = require_string(j, "id");
  c.question = require_string(j, "question");
  c.response = j.value("response", "");
  c.feedback = j.value("feedback", Json::object());
}

void FailurePredicate::validate() const {
  switch (kind) {
    case PredicateKind::Regex:
      if (pattern.empty()) throw InvalidArgument("regex predicate needs a pattern");
      try {
        std::regex re(pattern, std::regex::ECMAScript | std::regex::icase);
      } catch (const std::regex_error& e) {
        throw InvalidArgument(fmt::format("bad regex '{}': {}", pattern, e.what()));
      }
      break;
    case PredicateKind::Keyword:
      if (keywords.empty()) throw InvalidArgument("keyword predicate needs at least one keyword");
      for (const auto& k : keywords) {
        if (trim(k).empty()) throw InvalidArgument("keyword predicate has an empty keyword");
      }
      break;
    case PredicateKind::Judge:
      if (trim(description).empty()) throw InvalidArgument("judge predicate needs a description");
      break;
  }
}

void to_json(Json& j, const FailurePredicate& p) {
  switch (p.kind) {
    case PredicateKind::Regex:
      j = Json{{"kind", "regex"}, {"pattern", p.pattern}};
      break;
    case PredicateKind::Keyword:
      j = Json{{"kind", "keyword"}, {"keywords", p.keywords}};
      break;
    case PredicateKind::Judge:
      j = Json{{"kind", "judge"}, {"description", p.description}};
      break;
  }
}

void from_json(const Json& j, FailurePredicate& p) {
  p = FailurePredicate{};
  const auto kind = require_string(j, "kind");
  if (kind == "regex") {
    p.kind = PredicateKind::Regex;
    p.pattern = require_string(j, "pattern");
  } else if (kind == "keyword") {
    p.kind = PredicateKind::Keyword;
    p.keywords = j.at("keywords").get<std::vector<std::string>>();
  } else if (kind == "judge") {
    p.kind = PredicateKind::Judge;
    p.description = require_string(j, "description");
  } else {
    throw InvalidArgument(fmt::format("unknown predicate kind '{}'", kind));
  }
  p.validate();
}

JudgeClassifier make_judge_classifier(std::shared_ptr<gateway::ChatClient> client,
                                      const prompts::PromptRegistry& registry, std::string judge_model) {
  return [client, &registry, judge_model](const std::string&, const FailurePredicate& p, const Candidate& c) {
    const auto prompt = registry.render(prompts::ids::kFailureModeClassifier,
                                        {{"description", p.description}, {"query", c.question}, {"response", c.response}});
    const judge::ReplySource source = [&](std::string_view reminder) {
      const auto text = reminder.empty() ? prompt : prompt + "\n\n" + std::string(reminder);
      return client->complete(gateway::ChatRequest::single_turn(judge_model, text, 0.0, 16)).content;
    };
    const auto outcome =
        judge::parse_with_retry<judge::YesNoVerdict>(judge::parse_yes_no, source, 3, judge::kYesNoReminder);
    return outcome.verdict && outcome.verdict->value;
  };
}

bool predicate_matches(const std::string& tag, const FailurePredicate& predicate, const Candidate& candidate,
                       const JudgeClassifier& classifier) {
  const auto text = candidate.question + "\n" + candidate.response;
  switch (predicate.kind) {
    case PredicateKind::Regex:
      return std::regex_search(text, std::regex(predicate.pattern, std::regex::ECMAScript | std::regex::icase));
    case PredicateKind::Keyword: {
      const auto lower = to_lower(text);
      for (const auto& k : predicate.keywords) {
        if (lower.find(to_lower(trim(k))) != std::string::npos) return true;
      }
      return false;
    }
    case PredicateKind::Judge:
      if (!classifier) throw InvalidArgument(fmt::format("tag '{}' needs a judge classifier", tag));
      return classifier(tag, predicate, candidate);
  }
  return false;
}

RoundTransition vlsafe_round(const CurationRound& prev, const std::map<std::string, FailurePredicate>& tags,
                             const std::vector<Candidate>& fresh, const std::set<std::string>& ever_removed,
                             const JudgeClassifier& classifier) {
  RoundTransition out;
  std::set<std::string> used_tags;
  for (const auto& [id, v] : prev.verdicts) {
    if (v.kind != VerdictKind::Reject) continue;
    if (!tags.contains(v.tag)) throw UnknownTag(v.tag);
    out.removed[id] = v.tag;
    used_tags.insert(v.tag);
  }
  for (const auto& [id, candidate] : prev.candidates) {
    if (out.removed.contains(id)) continue;
    for (const auto& tag : used_tags) {
      if (predicate_matches(tag, tags.at(tag), candidate, classifier)) {
        out.removed[id] = tag;
        break;
      }
    }
  }

  out.next.round_index = prev.round_index + 1;
  for (const auto& [id, candidate] : prev.candidates) {
    if (!out.removed.contains(id)) out.next.candidates.emplace(id, candidate);
  }
  for (const auto& c : fresh) {
    if (ever_removed.contains(c.id) || out.removed.contains(c.id)) continue;
    out.next.candidates.emplace(c.id, c);
  }
  return out;
}

namespace {

std::string verdict_text(VerdictKind k) { return k == VerdictKind::Accept ? "accept" : "reject"; }

Json round_opened(int index, const std::map<std::string, Candidate>& candidates) {
  Json list = Json::array();
  for (const auto& [id, c] : candidates) list.push_back(c);
  return Json{{"event", "round_opened"}, {"round", index}, {"candidates", list}};
}

}  // namespace

CurationState CurationState::replay(const std::vector<Json>& events, Sink sink) {
  CurationState state;
  for (const auto& e : events) state.apply(e);
  state.sink_ = std::move(sink);
  return state;
}

void CurationState::emit(const Json& event) {
  if (sink_) sink_(event);  // persist first: if the write fails, memory stays unchanged
  apply(event);
}

void CurationState::apply(const Json& e) {
  const auto type = require_string(e, "event");
  if (type == "tag_registered") {
    tags_[require_string(e, "tag")] = e.at("predicate").get<FailurePredicate>();
  } else if (type == "round_opened") {
    CurationRound r;
    r.round_index = e.at("round").get<int>();
    for (const auto& c : e.at("candidates")) {
      auto cand = c.get<Candidate>();
      r.candidates.emplace(cand.id, std::move(cand));
    }
    rounds_[r.round_index] = std::move(r);
  } else if (type == "verdict") {
    auto& r = mutable_round(e.at("round").get<int>());
    Verdict v;
    v.kind = require_string(e, "verdict") == "reject" ? VerdictKind::Reject : VerdictKind::Accept;
    v.tag = e.value("tag", "");
    r.verdicts[require_string(e, "id")] = v;
  } else if (type == "round_advanced") {
    auto& r = mutable_round(e.at("round").get<int>());
    r.advanced = true;
    r.removed_ids = e.at("removed").get<std::map<std::string, std::string>>();
    for (const auto& [id, tag] : r.removed_ids) ever_removed_.insert(id);
    CurationRound next;
    next.round_index = e.at("next_round").get<int>();
    for (const auto& c : e.at("candidates")) {
      auto cand = c.get<Candidate>();
      next.candidates.emplace(cand.id, std::move(cand));
    }
    rounds_[next.round_index] = std::move(next);
  } else {
    throw InvalidArgument(fmt::format("unknown curation event '{}'", type));
  }
}

CurationRound& CurationState::mutable_round(int index) {
  auto it = rounds_.find(index);
  if (it == rounds_.end()) throw CurationError(CurationError::Code::UnknownRound, fmt::format("no round {}", index));
  return it->second;
}

const CurationRound& CurationState::round(int index) const {
  auto it = rounds_.find(index);
  if (it == rounds_.end()) throw CurationError(CurationError::Code::UnknownRound, fmt::format("no round {}", index));
  return it->second;
}

int CurationState::current_round() const {
  if (rounds_.empty()) throw CurationError(CurationError::Code::UnknownRound, "no rounds opened yet");
  return rounds_.rbegin()->first;
}

void CurationState::open_first_round(const std::vector<Candidate>& candidates) {
  if (!rounds_.empty()) throw CurationError(CurationError::Code::Conflict, "rounds already exist");
  std::map<std::string, Candidate> by_id;
  for (const auto& c : candidates) {
    if (!by_id.emplace(c.id, c).second) throw InvalidArgument(fmt::format("duplicate candidate id '{}'", c.id));
  }
  emit(round_opened(0, by_id));
}

void CurationState::register_tag(const std::string& tag, const FailurePredicate& predicate) {
  if (trim(tag).empty()) throw InvalidArgument("tag must be nonempty");
  predicate.validate();
  auto it = tags_.find(tag);
  if (it != tags_.end()) {
    if (it->second == predicate) return;
    throw CurationError(CurationError::Code::Conflict, fmt::format("tag '{}' already has a different predicate", tag));
  }
  emit(Json{{"event", "tag_registered"}, {"tag", tag}, {"predicate", predicate}});
}

VerdictResult CurationState::record_verdict(int round_index, const std::string& id, const Verdict& verdict) {
  const auto& r = round(round_index);
  if (!r.candidates.contains(id)) {
    throw CurationError(CurationError::Code::UnknownItem, fmt::format("round {} has no item '{}'", round_index, id));
  }
  if (verdict.kind == VerdictKind::Reject && trim(verdict.tag).empty()) {
    throw CurationError(CurationError::Code::MissingTag, "a rejection needs a failure-mode tag");
  }
  if (verdict.kind == VerdictKind::Accept && !verdict.tag.empty()) {
    throw CurationError(CurationError::Code::MissingTag, "an acceptance carries no tag");
  }
  if (verdict.kind == VerdictKind::Reject && !tags_.contains(verdict.tag)) throw UnknownTag(verdict.tag);
  if (auto it = r.verdicts.find(id); it != r.verdicts.end()) {
    if (it->second == verdict) return VerdictResult::Duplicate;
    throw CurationError(CurationError::Code::Conflict, fmt::format("item '{}' already has a different verdict", id));
  }
  if (r.advanced) throw CurationError(CurationError::Code::Closed, fmt::format("round {} is closed", round_index));
  Json e{{"event", "verdict"}, {"round", round_index}, {"id", id}, {"verdict", verdict_text(verdict.kind)}};
  if (verdict.kind == VerdictKind::Reject) e["tag"] = verdict.tag;
  emit(e);
  return VerdictResult::Recorded;
}

AdvanceSummary CurationState::advance(int round_index, bool force, const std::vector<Candidate>& fresh,
                                      const JudgeClassifier& classifier) {
  const auto& r = round(round_index);
  if (r.advanced) throw CurationError(CurationError::Code::Closed, fmt::format("round {} already advanced", round_index));
  if (!force && r.unresolved() > 0) {
    throw CurationError(CurationError::Code::Unresolved,
                        fmt::format("round {} has {} unresolved items", round_index, r.unresolved()));
  }
  auto transition = vlsafe_round(r, tags_, fresh, ever_removed_, classifier);
  AdvanceSummary summary{transition.removed.size(), r.candidates.size() - transition.removed.size(),
                         transition.next.round_index};
  // One event for both halves so a crash cannot leave a closed round without a successor.
  auto event = round_opened(transition.next.round_index, transition.next.candidates);
  event["event"] = "round_advanced";
  event["round"] = round_index;
  event["next_round"] = transition.next.round_index;
  event["removed"] = transition.removed;
  emit(event);
  return summary;
}

Json CurationState::snapshot() const {
  Json rounds = Json::array();
  for (const auto& [index, r] : rounds_) {
    Json cands = Json::array();
    for (const auto& [id, c] : r.candidates) cands.push_back(c);
    Json verdicts = Json::object();
    for (const auto& [id, v] : r.verdicts) verdicts[id] = Json{{"verdict", verdict_text(v.kind)}, {"tag", v.tag}};
    rounds.push_back(Json{{"round", index},
                          {"candidates", cands},
                          {"verdicts", verdicts},
                          {"removed", r.removed_ids},
                          {"advanced", r.advanced}});
  }
  Json tags = Json::object();
  for (const auto& [tag, p] : tags_) tags[tag] = p;
  return Json{{"rounds", rounds}, {"tags", tags}, {"ever_removed", ever_removed_}};
}

}  // namespace nlf::dataset
