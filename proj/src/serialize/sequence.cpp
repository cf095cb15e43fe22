#include "nlf/serialize/sequence.hpp"

#include <cctype>

#include <fmt/format.h>

#include "nlf/core/util.hpp"

namespace nlf::serialize {

std::string verbalizer_token(Rating rating) { return fmt::format("<{}>", verbalize(rating)); }

std::string critique_token(std::string_view critique) {
  std::string out = "[";
  bool space = false;
  for (char c : trim(critique)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out + "]";
}

std::optional<ControlToken> parse_control(std::string_view token) {
  if (token.size() >= 2 && token.front() == '[' && token.back() == ']') {
    return ControlToken{ControlKind::CritiqueOpen, std::string(token.substr(1, token.size() - 2))};
  }
  if (token == control::kImage) return ControlToken{ControlKind::ImageOpen, ""};
  if (token == control::kQuestion) return ControlToken{ControlKind::QuestionOpen, ""};
  if (token == control::kRefinement) return ControlToken{ControlKind::RefinementOpen, ""};
  if (token.size() > 2 && token.front() == '<' && token.back() == '>') {
    const auto word = token.substr(1, token.size() - 2);
    for (auto w : kVerbalizerWords) {
      if (w == word) return ControlToken{ControlKind::VerbalizerOpen, std::string(word)};
    }
  }
  return std::nullopt;
}

bool is_control(std::string_view token) { return parse_control(token).has_value(); }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      flush();
      out.emplace_back(1, c);
    } else {
      word += c;
    }
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::string_view to_string(SampleKind kind) { return kind == SampleKind::Feedback ? "feedback" : "regularization"; }

SampleKind parse_sample_kind(std::string_view text) {
  if (text == "feedback") return SampleKind::Feedback;
  if (text == "regularization") return SampleKind::Regularization;
  throw InvalidArgument(fmt::format("unknown sample kind '{}'", text));
}

std::size_t TrainingSequence::masked_count() const {
  std::size_t n = 0;
  for (bool m : loss_mask) n += m ? 1 : 0;
  return n;
}

void to_json(Json& j, const TrainingSequence& s) {
  j = Json{{"record_id", s.record_id},
           {"tokens", s.tokens},
           {"loss_mask", s.loss_mask},
           {"sample_kind", std::string(to_string(s.sample_kind))},
           {"turn_count", s.turn_count}};
}

void from_json(const Json& j, TrainingSequence& s) {
  s.record_id = require_string(j, "record_id");
  s.tokens = j.at("tokens").get<std::vector<std::string>>();
  s.loss_mask = j.at("loss_mask").get<std::vector<bool>>();
  s.sample_kind = parse_sample_kind(require_string(j, "sample_kind"));
  s.turn_count = j.value("turn_count", std::size_t{0});
  if (s.tokens.size() != s.loss_mask.size()) {
    throw InvalidArgument(fmt::format("sequence '{}': {} tokens but {} mask entries", s.record_id, s.tokens.size(),
                                      s.loss_mask.size()));
  }
}

InvalidRecord::InvalidRecord(const std::string& record_id, std::vector<Violation> violations)
    : Error(fmt::format("record '{}' is invalid: {} ({})", record_id, violations.front().rule, violations.front().field)),
      violations_(std::move(violations)) {}

namespace {

class Builder {
 public:
  void context(std::string_view token) { push(std::string(token), false); }
  void context_text(std::string_view text) {
    for (auto& t : tokenize(text)) push(std::move(t), false);
  }
  void response_text(std::string_view text) {
    for (auto& t : tokenize(text)) push(std::move(t), true);
  }
  void image_and_question(const FeedbackRecord& r) {
    context(control::kImage);
    context_text(r.image_context);
    context(control::kQuestion);
    context_text(r.question);
  }
  void turn(const InteractionTurn& t, const SerializeOptions& o, bool with_refinement) {
    context(verbalizer_token(t.rating));
    if (o.critique_on) context(critique_token(t.critique));
    response_text(t.response);
    if (with_refinement && o.refinement_on && t.refinement) {
      context(control::kRefinement);
      context_text(*t.refinement);
    }
  }
  TrainingSequence finish(std::string id, SampleKind kind, std::size_t turns, const SerializeOptions& o) {
    if (o.max_length > 0 && seq_.tokens.size() > o.max_length) {
      throw SequenceTooLong(fmt::format("sequence '{}' has {} tokens, limit {}", id, seq_.tokens.size(), o.max_length));
    }
    seq_.record_id = std::move(id);
    seq_.sample_kind = kind;
    seq_.turn_count = turns;
    return std::move(seq_);
  }

 private:
  void push(std::string token, bool masked) {
    seq_.tokens.push_back(std::move(token));
    seq_.loss_mask.push_back(masked);
  }
  TrainingSequence seq_;
};

void require_valid(const FeedbackRecord& record) {
  auto violations = validate_record(record);
  if (!violations.empty()) throw InvalidRecord(record.id, std::move(violations));
  for (const auto& t : record.turns) {
    if (tokenize(t.response).empty()) {
      throw InvalidRecord(record.id, {Violation{"turns.response", "response has no tokens"}});
    }
  }
}

}  // namespace

TrainingSequence serialize(const FeedbackRecord& record, const SerializeOptions& options) {
  require_valid(record);
  Builder b;
  b.image_and_question(record);
  for (const auto& t : record.turns) b.turn(t, options, true);
  return b.finish(record.id, SampleKind::Feedback, record.turns.size(), options);
}

std::vector<TrainingSequence> serialize_per_turn(const FeedbackRecord& record, const SerializeOptions& options) {
  require_valid(record);
  std::vector<TrainingSequence> out;
  for (std::size_t j = 0; j < record.turns.size(); ++j) {
    Builder b;
    b.image_and_question(record);
    for (std::size_t k = 0; k < j; ++k) {
      const auto& t = record.turns[k];
      b.context(verbalizer_token(t.rating));
      if (options.critique_on) b.context(critique_token(t.critique));
      b.context_text(t.response);  // earlier responses are context here, not targets
      if (options.refinement_on && t.refinement) {
        b.context(control::kRefinement);
        b.context_text(*t.refinement);
      }
    }
    b.turn(record.turns[j], options, false);
    out.push_back(b.finish(fmt::format("{}#turn{}", record.id, j + 1), SampleKind::Feedback, j + 1, options));
  }
  return out;
}

TrainingSequence serialize_regularization(const std::string& id, std::string_view image_context,
                                          std::string_view caption, const SerializeOptions& options) {
  if (tokenize(caption).empty()) throw InvalidArgument(fmt::format("caption for '{}' is empty", id));
  Builder b;
  b.context(control::kImage);
  b.context_text(image_context);
  b.response_text(caption);
  return b.finish(id, SampleKind::Regularization, 0, options);
}

CaptionPair deserialize_regularization(const TrainingSequence& s) {
  if (s.sample_kind != SampleKind::Regularization || s.tokens.empty() || s.tokens.front() != control::kImage) {
    throw InvalidArgument(fmt::format("sequence '{}' is not a regularization sequence", s.record_id));
  }
  std::vector<std::string> context;
  std::vector<std::string> caption;
  for (std::size_t i = 1; i < s.tokens.size(); ++i) (s.loss_mask[i] ? caption : context).push_back(s.tokens[i]);
  return {detokenize(context), detokenize(caption)};
}

std::vector<std::string> inference_prefix() {
  return {verbalizer_token(Rating(Rating::kMax)), critique_token(kOptimalCritique)};
}

std::optional<FeedbackRecord> apply_ablation(const FeedbackRecord& record, const CorpusOptions& options) {
  if (!options.aspects.empty() && !options.aspects.contains(record.aspect)) return std::nullopt;
  FeedbackRecord out = record;
  if (!options.rlaif_on) {
    out.turns = {record.turns.back()};
  } else if (!options.sequence.refinement_on && out.turns.size() > 2) {
    out.turns = {record.turns.front(), record.turns.back()};
  }
  return out;
}

std::vector<TrainingSequence> serialize_corpus(std::span<const FeedbackRecord> records,
                                               std::span<const CaptionPair> regularization,
                                               const CorpusOptions& options) {
  std::vector<TrainingSequence> out;
  for (const auto& r : records) {
    if (auto variant = apply_ablation(r, options)) out.push_back(serialize(*variant, options.sequence));
  }
  for (std::size_t i = 0; i < regularization.size(); ++i) {
    out.push_back(serialize_regularization(fmt::format("reg{:06}", i), regularization[i].image_context,
                                           regularization[i].caption, options.sequence));
  }
  return out;
}

}  // namespace nlf::serialize
