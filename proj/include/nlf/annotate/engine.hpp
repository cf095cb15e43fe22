#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nlf/core/json.hpp"
#include "nlf/core/types.hpp"
#include "nlf/gateway/client.hpp"
#include "nlf/prompts/registry.hpp"

namespace nlf::annotate {

/// A feedback-subset sample before any response has been generated for it.
struct Sample {
  std::string id;
  Aspect aspect = Aspect::Helpfulness;
  std::string image_ref;
  std::string image_context;
  std::string question;
  std::string ground_truth;
};

void to_json(Json& j, const Sample& s);
/// Accepts the split output schema; extra keys (data_type, image_id, ...) are ignored.
void from_json(const Json& j, Sample& s);

/// Which ratings earn another generation turn. Turn indices are 1-based.
struct TurnPolicy {
  int max_turns = static_cast<int>(kMaxTurns);
  std::map<int, std::set<int>> continue_thresholds = {{1, {1, 2}}, {2, {2, 3}}, {3, {1, 2, 3}}};

  /// Throws InvalidArgument if max_turns < 1 or any threshold contains 4.
  void validate() const;
  [[nodiscard]] bool rating_continues(int turn_index, Rating rating) const;
  /// True when the generated turns so far earn one more turn: the latest rating is in the
  /// turn's threshold set, the latest turn did not fail to improve on its predecessor, and
  /// one more generated turn still leaves room for the ground-truth turn.
  [[nodiscard]] bool should_continue(std::span<const InteractionTurn> generated) const;
};

enum class TrajectoryOutcome { FailedInteraction, SuccessfulInteraction, SavedEarly };

std::string_view to_string(TrajectoryOutcome outcome);
TrajectoryOutcome parse_outcome(std::string_view text);

/// Classifies generated turns (ground-truth turn excluded). Failed iff some turn j > 1 is
/// rated no higher than turn j - 1; SavedEarly for a single generated turn.
TrajectoryOutcome classify_trajectory(std::span<const InteractionTurn> generated);

class ResponseGenerator {
 public:
  virtual ~ResponseGenerator() = default;
  /// `prior` holds every earlier generated turn, each with its refinement feedback.
  virtual std::string generate(const Sample& sample, std::span<const InteractionTurn> prior) = 0;
};

/// Result of judging one response; an empty turn marks the sample Invalid.
struct TurnAnnotation {
  std::optional<InteractionTurn> turn;
  int judge_attempts = 0;
  std::string invalid_reason;

  [[nodiscard]] bool invalid() const noexcept { return !turn.has_value(); }
};

class TurnAnnotator {
 public:
  virtual ~TurnAnnotator() = default;
  virtual TurnAnnotation annotate_turn(const Sample& sample, std::string_view response, Aspect aspect) = 0;
};

/// Generator backed by a chat model: the first turn sees the scene text and the question;
/// later turns replay earlier answers with their refinement feedback as dialogue.
class ChatGenerator final : public ResponseGenerator {
 public:
  ChatGenerator(std::shared_ptr<gateway::ChatClient> client, std::string model_id, int max_tokens = 512);

  std::string generate(const Sample& sample, std::span<const InteractionTurn> prior) override;

  [[nodiscard]] gateway::ChatRequest build_request(const Sample& sample,
                                                   std::span<const InteractionTurn> prior) const;

 private:
  std::shared_ptr<gateway::ChatClient> client_;
  std::string model_id_;
  int max_tokens_;
};

struct AnnotatorConfig {
  std::string judge_model = "judge";
  std::string incontext_example;
  int parse_attempts = 3;
  int max_tokens = 1024;
};

/// Judge-backed annotation: aspect template -> reason/rating/feedback, then a second call
/// compressing the reason into the critique.
class JudgeAnnotator final : public TurnAnnotator {
 public:
  JudgeAnnotator(std::shared_ptr<gateway::ChatClient> client, const prompts::PromptRegistry& registry,
                 AnnotatorConfig cfg);

  TurnAnnotation annotate_turn(const Sample& sample, std::string_view response, Aspect aspect) override;

  /// Summarizes a reason into a critique, re-asking once when the result is outside 3-9 words.
  std::string summarize(std::string_view reason);

 private:
  std::string ask(const std::string& prompt);

  std::shared_ptr<gateway::ChatClient> client_;
  const prompts::PromptRegistry& registry_;
  AnnotatorConfig cfg_;
};

enum class TrajectoryStatus { Completed, Invalid, Aborted };

struct TrajectoryResult {
  TrajectoryStatus status = TrajectoryStatus::Completed;
  std::optional<FeedbackRecord> record;
  std::optional<TrajectoryOutcome> outcome;
  std::vector<InteractionTurn> generated;  // turns produced before any stop, for checkpoints
  std::string error;
};

using TurnObserver = std::function<void(std::span<const InteractionTurn>)>;

/// Runs the iterative generation-annotation loop for one sample, resuming after `resume`
/// (previously checkpointed generated turns). The ground truth is appended as the final
/// turn with rating 4 and the optimal critique.
TrajectoryResult run_trajectory(const Sample& sample, const TurnPolicy& policy,
                                ResponseGenerator& generator, TurnAnnotator& judge,
                                std::vector<InteractionTurn> resume = {},
                                const TurnObserver& on_turn = {});

/// Appends the ground-truth turn to generated turns.
FeedbackRecord finalize_record(const Sample& sample, std::vector<InteractionTurn> generated);

}  // namespace nlf::annotate
