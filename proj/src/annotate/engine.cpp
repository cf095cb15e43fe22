#include "nlf/annotate/engine.hpp"

#include <fmt/format.h>

#include "nlf/core/util.hpp"
#include "nlf/judge/parse.hpp"

namespace nlf::annotate {

void to_json(Json& j, const Sample& s) {
  j = Json{{"id", s.id},
           {"aspect", std::string(to_string(s.aspect))},
           {"image_ref", s.image_ref},
           {"image_context", s.image_context},
           {"question", s.question},
           {"ground_truth", s.ground_truth}};
}

void from_json(const Json& j, Sample& s) {
  s.id = require_string(j, "id");
  s.aspect = parse_aspect(require_string(j, "aspect"));
  s.image_ref = require_string(j, "image_ref");
  s.image_context = j.value("image_context", "");
  s.question = require_string(j, "question");
  s.ground_truth = require_string(j, "ground_truth");
}

void TurnPolicy::validate() const {
  if (max_turns < 1) throw InvalidArgument("max_turns must be >= 1");
  for (const auto& [turn, ratings] : continue_thresholds) {
    if (turn < 1) throw InvalidArgument("threshold turn indices start at 1");
    for (int r : ratings) {
      if (r < Rating::kMin || r >= Rating::kMax) {
        throw InvalidArgument(fmt::format("turn {} threshold contains rating {}", turn, r));
      }
    }
  }
}

bool TurnPolicy::rating_continues(int turn_index, Rating rating) const {
  auto it = continue_thresholds.find(turn_index);
  return it != continue_thresholds.end() && it->second.contains(rating.value());
}

bool TurnPolicy::should_continue(std::span<const InteractionTurn> generated) const {
  const auto n = static_cast<int>(generated.size());
  if (n + 1 >= max_turns) return false;  // next generated turn would leave no room for the ground truth
  if (n == 0) return true;
  if (n >= 2 && generated[n - 1].rating <= generated[n - 2].rating) return false;
  return rating_continues(n, generated[n - 1].rating);
}

std::string_view to_string(TrajectoryOutcome outcome) {
  switch (outcome) {
    case TrajectoryOutcome::FailedInteraction:
      return "failed_interaction";
    case TrajectoryOutcome::SuccessfulInteraction:
      return "successful_interaction";
    case TrajectoryOutcome::SavedEarly:
      return "saved_early";
  }
  return "saved_early";
}

TrajectoryOutcome parse_outcome(std::string_view text) {
  if (text == "failed_interaction") return TrajectoryOutcome::FailedInteraction;
  if (text == "successful_interaction") return TrajectoryOutcome::SuccessfulInteraction;
  if (text == "saved_early") return TrajectoryOutcome::SavedEarly;
  throw InvalidArgument(fmt::format("unknown trajectory outcome '{}'", text));
}

TrajectoryOutcome classify_trajectory(std::span<const InteractionTurn> generated) {
  for (std::size_t j = 1; j < generated.size(); ++j) {
    if (generated[j].rating <= generated[j - 1].rating) return TrajectoryOutcome::FailedInteraction;
  }
  return generated.size() >= 2 ? TrajectoryOutcome::SuccessfulInteraction : TrajectoryOutcome::SavedEarly;
}

ChatGenerator::ChatGenerator(std::shared_ptr<gateway::ChatClient> client, std::string model_id,
                             int max_tokens)
    : client_(std::move(client)), model_id_(std::move(model_id)), max_tokens_(max_tokens) {}

gateway::ChatRequest ChatGenerator::build_request(const Sample& sample,
                                                  std::span<const InteractionTurn> prior) const {
  using gateway::Role;
  gateway::ChatRequest req;
  req.model_id = model_id_;
  req.temperature = 0.0;  // greedy
  req.max_tokens = max_tokens_;
  req.messages.push_back({Role::User, fmt::format("Image: {}\nScene descriptions: {}\n\nQuestion: {}",
                                                  sample.image_ref, sample.image_context,
                                                  sample.question)});
  for (const auto& turn : prior) {
    req.messages.push_back({Role::Assistant, turn.response});
    req.messages.push_back(
        {Role::User, fmt::format("Feedback: {}\nPlease refine your previous response based on this "
                                 "feedback.\n\nQuestion: {}",
                                 turn.refinement.value_or(""), sample.question)});
  }
  return req;
}

std::string ChatGenerator::generate(const Sample& sample, std::span<const InteractionTurn> prior) {
  return trim(client_->complete(build_request(sample, prior)).content);
}

JudgeAnnotator::JudgeAnnotator(std::shared_ptr<gateway::ChatClient> client,
                               const prompts::PromptRegistry& registry, AnnotatorConfig cfg)
    : client_(std::move(client)), registry_(registry), cfg_(std::move(cfg)) {}

std::string JudgeAnnotator::ask(const std::string& prompt) {
  const auto req = gateway::ChatRequest::single_turn(cfg_.judge_model, prompt, 0.0, cfg_.max_tokens);
  return client_->complete(req).content;
}

std::string JudgeAnnotator::summarize(std::string_view reason) {
  const auto prompt = prompts::summarize_critique_prompt(registry_, reason);
  auto critique = judge::clean_critique(ask(prompt));
  if (!judge::critique_length_ok(critique)) {
    const auto retry = judge::clean_critique(ask(fmt::format(
        "{}\n\nYour previous critique \"{}\" had {} words. Reply with a critique of 5-7 words.",
        prompt, critique, word_count(critique))));
    if (!retry.empty()) critique = retry;
  }
  return critique;
}

TurnAnnotation JudgeAnnotator::annotate_turn(const Sample& sample, std::string_view response,
                                             Aspect aspect) {
  std::map<std::string, std::string> slots = {{"query", sample.question},
                                              {"response", std::string(response)},
                                              {"reference", sample.ground_truth}};
  if (aspect != Aspect::Harmlessness) {
    slots["scene"] = sample.image_context;
    slots["incontext_example"] = cfg_.incontext_example;
  }
  const auto prompt = registry_.render(prompts::annotation_template(aspect), slots);
  const judge::ReplySource source = [&](std::string_view reminder) {
    return ask(reminder.empty() ? prompt : fmt::format("{}\n\n{}", prompt, reminder));
  };

  std::string reason;
  std::string feedback;
  std::optional<Rating> rating;
  TurnAnnotation out;
  if (aspect == Aspect::Harmlessness) {
    const std::function<judge::HarmfulnessVerdict(std::string_view)> parse = [](std::string_view reply) {
      auto v = judge::parse_harmfulness(reply);
      if (v.feedback.empty()) throw judge::ParseError("Feedback");
      return v;
    };
    auto parsed = judge::parse_with_retry(parse, source, cfg_.parse_attempts, judge::kHarmfulnessReminder);
    out.judge_attempts = parsed.attempts;
    if (parsed.invalid()) {
      out.invalid_reason = parsed.last_error;
      return out;
    }
    // A binary verdict lands on the ends of the four-level scale.
    rating = Rating(parsed.verdict->harmful ? Rating::kMin : Rating::kMax);
    feedback = parsed.verdict->feedback;
    reason = feedback;
  } else {
    const std::function<judge::AnnotationVerdict(std::string_view)> parse = [](std::string_view reply) {
      auto v = judge::parse_annotation(reply);
      if (v.feedback.empty()) throw judge::ParseError("Feedback");
      if (v.reason.empty()) throw judge::ParseError("Reason");
      return v;
    };
    auto parsed = judge::parse_with_retry(parse, source, cfg_.parse_attempts, judge::kAnnotationReminder);
    out.judge_attempts = parsed.attempts;
    if (parsed.invalid()) {
      out.invalid_reason = parsed.last_error;
      return out;
    }
    rating = parsed.verdict->rating;
    reason = parsed.verdict->reason;
    feedback = parsed.verdict->feedback;
  }

  auto critique = summarize(reason);
  if (critique.empty()) {
    out.invalid_reason = "critique summary was empty";
    return out;
  }
  out.turn = InteractionTurn{std::string(response), *rating, std::move(reason), std::move(critique),
                             std::move(feedback)};
  return out;
}

FeedbackRecord finalize_record(const Sample& sample, std::vector<InteractionTurn> generated) {
  FeedbackRecord record;
  record.id = sample.id;
  record.aspect = sample.aspect;
  record.image_ref = sample.image_ref;
  record.image_context = sample.image_context;
  record.question = sample.question;
  record.ground_truth = sample.ground_truth;
  record.turns = std::move(generated);
  record.turns.push_back(InteractionTurn{sample.ground_truth, Rating(Rating::kMax), "",
                                         std::string(kOptimalCritique), std::nullopt});
  return record;
}

TrajectoryResult run_trajectory(const Sample& sample, const TurnPolicy& policy,
                                ResponseGenerator& generator, TurnAnnotator& judge,
                                std::vector<InteractionTurn> resume, const TurnObserver& on_turn) {
  policy.validate();
  TrajectoryResult result;
  result.generated = std::move(resume);

  while (policy.should_continue(result.generated)) {
    std::string response;
    try {
      response = generator.generate(sample, result.generated);
    } catch (const gateway::AuthError&) {
      throw;
    } catch (const std::exception& e) {
      result.status = TrajectoryStatus::Aborted;
      result.error = fmt::format("generator failed: {}", e.what());
      return result;
    }
    if (response.empty()) {
      result.status = TrajectoryStatus::Aborted;
      result.error = "generator returned an empty response";
      return result;
    }

    TurnAnnotation annotation;
    try {
      annotation = judge.annotate_turn(sample, response, sample.aspect);
    } catch (const gateway::AuthError&) {
      throw;
    } catch (const std::exception& e) {
      result.status = TrajectoryStatus::Aborted;
      result.error = fmt::format("judge call failed: {}", e.what());
      return result;
    }
    if (annotation.invalid()) {
      result.status = TrajectoryStatus::Invalid;
      result.error = fmt::format("judge reply unparseable after {} attempts: {}",
                                 annotation.judge_attempts, annotation.invalid_reason);
      return result;
    }
    result.generated.push_back(std::move(*annotation.turn));
    if (on_turn) on_turn(result.generated);
  }

  result.outcome = classify_trajectory(result.generated);
  result.record = finalize_record(sample, result.generated);
  result.status = TrajectoryStatus::Completed;
  return result;
}

}  // namespace nlf::annotate
