#include "nlf/core/types.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

namespace nlf {

std::string_view to_string(Aspect aspect) {
  switch (aspect) {
    case Aspect::Helpfulness:
      return "helpfulness";
    case Aspect::Honesty:
      return "honesty";
    case Aspect::Harmlessness:
      return "harmlessness";
  }
  return "helpfulness";
}

Aspect parse_aspect(std::string_view text) {
  if (text == "helpfulness") return Aspect::Helpfulness;
  if (text == "honesty") return Aspect::Honesty;
  if (text == "harmlessness") return Aspect::Harmlessness;
  throw InvalidArgument(fmt::format("unknown aspect '{}'", text));
}

Rating::Rating(int value) : value_(value) {
  if (value < kMin || value > kMax) {
    throw InvalidArgument(fmt::format("rating {} outside [{}, {}]", value, kMin, kMax));
  }
}

std::string_view verbalize(Rating rating) noexcept {
  return kVerbalizerWords[static_cast<std::size_t>(rating.value() - 1)];
}

Rating devebalize(std::string_view word) {
  for (std::size_t i = 0; i < kVerbalizerWords.size(); ++i) {
    if (kVerbalizerWords[i] == word) return Rating(static_cast<int>(i) + 1);
  }
  throw InvalidArgument(fmt::format("'{}' is not a verbalizer word", word));
}

std::vector<Violation> validate_record(const FeedbackRecord& record) {
  std::vector<Violation> out;
  auto flag = [&out](std::string field, std::string rule) {
    out.push_back({std::move(field), std::move(rule)});
  };

  if (record.id.empty()) flag("id", "must be nonempty");
  if (record.question.empty()) flag("question", "must be nonempty");
  if (record.ground_truth.empty()) flag("ground_truth", "must be nonempty");

  const auto& turns = record.turns;
  if (turns.empty()) {
    flag("turns", "at least one turn required");
    return out;
  }
  if (turns.size() > kMaxTurns) {
    flag("turns", fmt::format("turn count {} > {}", turns.size(), kMaxTurns));
  }

  for (std::size_t j = 0; j < turns.size(); ++j) {
    const auto& t = turns[j];
    const auto field = fmt::format("turns[{}]", j);
    if (t.response.empty()) flag(field + ".response", "must be nonempty");
    if (t.critique.empty()) flag(field + ".critique", "must be nonempty");
    const bool final_turn = j + 1 == turns.size();
    if (!final_turn) {
      // The turn before the ground truth may be optimal (it stopped the loop); earlier ones were continued.
      const bool continued = j + 2 < turns.size();
      if (continued && t.rating.optimal()) flag(field + ".rating", "continued turn must have rating < 4");
      if (!t.refinement || t.refinement->empty()) {
        flag(field + ".refinement", "refinement required on non-final turns");
      }
    }
  }

  const auto& last = turns.back();
  const auto last_field = fmt::format("turns[{}]", turns.size() - 1);
  if (last.response != record.ground_truth) {
    flag(last_field + ".response", "final turn must equal ground_truth");
  }
  if (!last.rating.optimal()) flag(last_field + ".rating", "final turn must be optimal (rating 4)");
  if (last.refinement) flag(last_field + ".refinement", "final turn carries no refinement");
  return out;
}

std::string_view to_string(Stage stage) { return stage == Stage::Sft ? "sft" : "feedback"; }

std::string_view to_string(DataType type) {
  switch (type) {
    case DataType::Conversation:
      return "conversation";
    case DataType::Reasoning:
      return "reasoning";
    case DataType::Adversarial:
      return "adversarial";
  }
  return "conversation";
}

Stage parse_stage(std::string_view text) {
  if (text == "sft") return Stage::Sft;
  if (text == "feedback") return Stage::Feedback;
  throw InvalidArgument(fmt::format("unknown stage '{}'", text));
}

DataType parse_data_type(std::string_view text) {
  if (text == "conversation") return DataType::Conversation;
  if (text == "reasoning") return DataType::Reasoning;
  if (text == "adversarial") return DataType::Adversarial;
  throw InvalidArgument(fmt::format("unknown data type '{}'", text));
}

std::int64_t DatasetManifest::total() const {
  std::int64_t sum = 0;
  for (const auto& [key, n] : split_counts) sum += n;
  return sum;
}

std::int64_t DatasetManifest::count(Stage stage, DataType type) const {
  auto it = split_counts.find({stage, type});
  return it == split_counts.end() ? 0 : it->second;
}

void LossSpec::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw InvalidArgument(fmt::format("alpha must be finite and >= 0, got {}", alpha));
  }
}

}  // namespace nlf
