#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "nlf/core/error.hpp"
#include "nlf/core/json.hpp"
#include "nlf/gateway/client.hpp"
#include "nlf/prompts/registry.hpp"

namespace nlf::dataset {

/// An adversarial sample under review, with whatever judge output came with it.
struct Candidate {
  std::string id;
  std::string question;
  std::string response;
  Json feedback = Json::object();

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

void to_json(Json& j, const Candidate& c);
void from_json(const Json& j, Candidate& c);

enum class PredicateKind { Regex, Keyword, Judge };

/// How a failure-mode tag recognises other candidates with the same problem. Regex and
/// keyword rules look at the question and response text (case-insensitive); judge rules
/// delegate to a classifier with the description.
struct FailurePredicate {
  PredicateKind kind = PredicateKind::Keyword;
  std::string pattern;
  std::vector<std::string> keywords;
  std::string description;

  void validate() const;
  friend bool operator==(const FailurePredicate&, const FailurePredicate&) = default;
};

void to_json(Json& j, const FailurePredicate& p);
void from_json(const Json& j, FailurePredicate& p);

using JudgeClassifier = std::function<bool(const std::string& tag, const FailurePredicate&, const Candidate&)>;

/// Classifier that asks the judge model whether a candidate shows a judge-rule failure mode.
/// Unparseable replies count as no match.
JudgeClassifier make_judge_classifier(std::shared_ptr<gateway::ChatClient> client,
                                      const prompts::PromptRegistry& registry, std::string judge_model);

bool predicate_matches(const std::string& tag, const FailurePredicate& predicate, const Candidate& candidate,
                       const JudgeClassifier& classifier);

enum class VerdictKind { Accept, Reject };

struct Verdict {
  VerdictKind kind = VerdictKind::Accept;
  std::string tag;  // required for Reject

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct CurationRound {
  int round_index = 0;
  std::map<std::string, Candidate> candidates;
  std::map<std::string, Verdict> verdicts;
  std::map<std::string, std::string> removed_ids;  // id -> tag, filled when the round advances
  bool advanced = false;

  [[nodiscard]] std::size_t unresolved() const { return candidates.size() - verdicts.size(); }
};

class CurationError : public Error {
 public:
  enum class Code { UnknownRound, UnknownItem, Conflict, MissingTag, UnknownTag, Closed, Unresolved };
  CurationError(Code code, const std::string& what) : Error(what), code_(code) {}
  [[nodiscard]] Code code() const noexcept { return code_; }

 private:
  Code code_;
};

class UnknownTag : public CurationError {
 public:
  explicit UnknownTag(const std::string& tag)
      : CurationError(Code::UnknownTag, "unknown failure-mode tag '" + tag + "'"), tag_(tag) {}
  [[nodiscard]] const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

struct RoundTransition {
  std::map<std::string, std::string> removed;  // id -> tag
  CurationRound next;
};

/// Closes `prev` using its recorded verdicts: rejected ids go with their tag, then every
/// remaining candidate matching a tag used in this round's rejections goes too. Survivors
/// plus fresh candidates (minus anything ever removed) form the next round.
RoundTransition vlsafe_round(const CurationRound& prev, const std::map<std::string, FailurePredicate>& tags,
                             const std::vector<Candidate>& fresh, const std::set<std::string>& ever_removed,
                             const JudgeClassifier& classifier = {});

struct AdvanceSummary {
  std::size_t removed_count = 0;
  std::size_t survivor_count = 0;
  int new_round_index = 0;
};

enum class VerdictResult { Recorded, Duplicate };

/// Curation state rebuilt from an append-only event list. Every mutation emits the events
/// that describe it, so replaying the log gives back the same rounds.
class CurationState {
 public:
  using Sink = std::function<void(const Json& event)>;

  CurationState() = default;
  explicit CurationState(Sink sink) : sink_(std::move(sink)) {}

  static CurationState replay(const std::vector<Json>& events, Sink sink = {});

  void open_first_round(const std::vector<Candidate>& candidates);
  /// Registering the same predicate again is a no-op; a different one is a Conflict.
  void register_tag(const std::string& tag, const FailurePredicate& predicate);
  VerdictResult record_verdict(int round, const std::string& id, const Verdict& verdict);
  AdvanceSummary advance(int round, bool force, const std::vector<Candidate>& fresh = {},
                         const JudgeClassifier& classifier = {});

  [[nodiscard]] const CurationRound& round(int index) const;
  [[nodiscard]] const std::map<int, CurationRound>& rounds() const noexcept { return rounds_; }
  [[nodiscard]] const std::map<std::string, FailurePredicate>& tags() const noexcept { return tags_; }
  [[nodiscard]] const std::set<std::string>& ever_removed() const noexcept { return ever_removed_; }
  [[nodiscard]] int current_round() const;

  /// Full state as JSON, for comparisons and snapshots.
  [[nodiscard]] Json snapshot() const;

 private:
  void apply(const Json& event);
  void emit(const Json& event);
  CurationRound& mutable_round(int index);

  Sink sink_;
  std::map<int, CurationRound> rounds_;
  std::map<std::string, FailurePredicate> tags_;
  std::set<std::string> ever_removed_;
};

}  // namespace nlf::dataset
