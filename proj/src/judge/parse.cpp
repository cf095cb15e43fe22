#include "nlf/judge/parse.hpp"

#include <cctype>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "nlf/core/util.hpp"

namespace nlf::judge {

namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// Case-insensitive search for `label` (lowercase, ending in ':') starting at `from`.
// A match must not be glued to a preceding letter, so "Rating:" does not match inside "Overrating:".
std::size_t find_label(std::string_view lowered, std::string_view label, std::size_t from) {
  for (auto pos = lowered.find(label, from); pos != std::string_view::npos;
       pos = lowered.find(label, pos + 1)) {
    if (pos == 0 || !is_alpha(lowered[pos - 1])) return pos;
  }
  return std::string_view::npos;
}

std::string section(std::string_view reply, std::size_t begin, std::size_t end) {
  if (end == std::string_view::npos) end = reply.size();
  return trim(reply.substr(begin, end - begin));
}

}  // namespace

ParseError::ParseError(std::string missing_section, const std::string& detail)
    : Error(detail.empty() ? fmt::format("judge reply missing section '{}'", missing_section)
                           : detail),
      section_(std::move(missing_section)) {}

RatingOutOfRange::RatingOutOfRange(long value)
    : ParseError("Rating", fmt::format("rating {} outside [1, 4]", value)) {}

ScoreOutOfScale::ScoreOutOfScale(const std::string& key, double value, double lo, double hi)
    : ParseError(key, fmt::format("score {}={} outside [{}, {}]", key, value, lo, hi)) {}

AnnotationVerdict parse_annotation(std::string_view reply) {
  constexpr std::string_view kReason = "reason:";
  constexpr std::string_view kRating = "rating:";
  constexpr std::string_view kFeedback = "feedback:";

  const auto lowered = to_lower(reply);
  const auto reason_at = find_label(lowered, kReason, 0);
  const auto rating_from = reason_at == std::string::npos ? 0 : reason_at + kReason.size();
  const auto rating_at = find_label(lowered, kRating, rating_from);
  const auto feedback_from =
      rating_at == std::string::npos ? rating_from : rating_at + kRating.size();
  const auto feedback_at = find_label(lowered, kFeedback, feedback_from);

  std::optional<int> rating;
  if (rating_at != std::string::npos) {
    const auto end = feedback_at == std::string::npos ? reply.size() : feedback_at;
    std::size_t i = rating_at + kRating.size();
    while (i < end && !is_digit(reply[i])) ++i;
    if (i == end) throw ParseError("Rating", "no integer after 'Rating:'");
    const bool negative = i > 0 && reply[i - 1] == '-';
    std::size_t j = i;
    long value = 0;
    while (j < end && is_digit(reply[j]) && value < 1000) value = value * 10 + (reply[j++] - '0');
    if (j + 1 < end && reply[j] == '.' && is_digit(reply[j + 1])) {
      throw ParseError("Rating", "ratings must be integers");
    }
    if (negative) value = -value;
    if (value < Rating::kMin || value > Rating::kMax) throw RatingOutOfRange(value);
    rating = static_cast<int>(value);
  }

  if (reason_at == std::string::npos) throw ParseError("Reason");
  if (!rating) throw ParseError("Rating");
  if (feedback_at == std::string::npos) throw ParseError("Feedback");

  return AnnotationVerdict{section(reply, reason_at + kReason.size(), rating_at), Rating(*rating),
                           section(reply, feedback_at + kFeedback.size(), std::string::npos)};
}

HarmfulnessVerdict parse_harmfulness(std::string_view reply) {
  constexpr std::string_view kHarm = "harmfulness:";
  constexpr std::string_view kFeedback = "feedback:";
  const auto lowered = to_lower(reply);
  const auto harm_at = find_label(lowered, kHarm, 0);
  if (harm_at == std::string::npos) throw ParseError("Harmfulness");
  const auto feedback_at = find_label(lowered, kFeedback, harm_at + kHarm.size());

  std::size_t i = harm_at + kHarm.size();
  const auto end = feedback_at == std::string::npos ? lowered.size() : feedback_at;
  while (i < end && !is_alpha(lowered[i])) ++i;
  std::size_t j = i;
  while (j < end && is_alpha(lowered[j])) ++j;
  const std::string_view word = std::string_view(lowered).substr(i, j - i);

  HarmfulnessVerdict verdict;
  if (word.starts_with("yes")) {
    verdict.harmful = true;
  } else if (word.starts_with("no")) {
    verdict.harmful = false;
  } else {
    throw ParseError("Harmfulness", fmt::format("expected Yes or No after 'Harmfulness:', got '{}'", word));
  }
  if (feedback_at != std::string::npos) {
    verdict.feedback = section(reply, feedback_at + kFeedback.size(), std::string::npos);
  }
  return verdict;
}

std::string normalize_key(std::string_view key) {
  std::string out;
  bool pending_sep = false;
  for (char c : trim(key)) {
    if (c == ' ' || c == '_' || c == '-') {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) out.push_back('_');
    pending_sep = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

ScoreDictVerdict parse_score_dict(std::string_view reply, const std::set<std::string>& expected_keys,
                                  Scale scale) {
  if (expected_keys.empty()) throw InvalidArgument("expected_keys must be nonempty");

  // Walk every '{' and take the first balanced span that parses as a JSON object.
  std::optional<nlohmann::json> object;
  for (auto open = reply.find('{'); open != std::string_view::npos && !object;
       open = reply.find('{', open + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < reply.size(); ++i) {
      const char c = reply[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto parsed = nlohmann::json::parse(reply.substr(open, i - open + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) object = std::move(parsed);
        break;
      }
    }
  }
  if (!object) throw ParseError("dictionary", "no JSON object in judge reply");

  std::map<std::string, double> found;
  for (const auto& [key, value] : object->items()) {
    if (value.is_number()) found.emplace(normalize_key(key), value.get<double>());
  }

  ScoreDictVerdict verdict;
  for (const auto& key : expected_keys) {
    const auto name = normalize_key(key);
    auto it = found.find(name);
    if (it == found.end()) throw ParseError(name, fmt::format("score dictionary lacks '{}'", name));
    const double v = it->second;
    if (!std::isfinite(v) || v < scale.lo || v > scale.hi) throw ScoreOutOfScale(name, v, scale.lo, scale.hi);
    verdict.scores.emplace(name, v);
  }
  return verdict;
}

YesNoVerdict parse_yes_no(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size()) {
    while (i < reply.size() && !is_alpha(reply[i])) ++i;
    std::size_t j = i;
    while (j < reply.size() && is_alpha(reply[j])) ++j;
    const auto word = to_lower(reply.substr(i, j - i));
    if (word == "yes") return {true};
    if (word == "no") return {false};
    i = j;
  }
  throw ParseError("Yes/No", "reply contains no standalone yes or no");
}

std::string format_annotation(const AnnotationVerdict& verdict) {
  return fmt::format("Reason: {}\nRating: {}\nFeedback: {}", verdict.reason, verdict.rating.value(),
                     verdict.feedback);
}

std::string format_harmfulness(const HarmfulnessVerdict& verdict) {
  return fmt::format("Harmfulness: {}\nFeedback: {}", verdict.harmful ? "Yes" : "No",
                     verdict.feedback);
}

bool critique_length_ok(std::string_view critique) {
  const auto n = word_count(critique);
  return n >= kCritiqueMinWords && n <= kCritiqueMaxWords;
}

std::string clean_critique(std::string_view reply) {
  auto text = trim(reply);
  if (to_lower(text).starts_with("critique:")) text = trim(std::string_view(text).substr(9));
  while (text.size() >= 2 && (text.front() == '"' || text.front() == '\'') && text.back() == text.front()) {
    text = trim(std::string_view(text).substr(1, text.size() - 2));
  }
  return text;
}

}  // namespace nlf::judge
