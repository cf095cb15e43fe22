#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlf/core/json.hpp"
#include "nlf/core/types.hpp"

namespace nlf::serialize {

/// Block openers. Plain text can never produce these: the tokenizer splits '<', '>', '['
/// and ']' into tokens of their own.
namespace control {
inline constexpr std::string_view kImage = "<image>";
inline constexpr std::string_view kQuestion = "<question>";
inline constexpr std::string_view kRefinement = "<refinement>";
}  // namespace control

enum class ControlKind { ImageOpen, QuestionOpen, VerbalizerOpen, CritiqueOpen, RefinementOpen };

struct ControlToken {
  ControlKind kind;
  std::string payload;  // verbalizer word or critique text; empty for the others
};

/// "<bad>", "<mediocre>", "<good>", "<excellent>".
std::string verbalizer_token(Rating rating);
/// A critique is one control token, its normalized text in brackets: "[Nice response.]".
std::string critique_token(std::string_view critique);
std::optional<ControlToken> parse_control(std::string_view token);
bool is_control(std::string_view token);

/// Word-level tokenizer: whitespace separates words and every ASCII punctuation character
/// is a token of its own.
std::vector<std::string> tokenize(std::string_view text);
std::string detokenize(std::span<const std::string> tokens);

enum class SampleKind { Feedback, Regularization };
std::string_view to_string(SampleKind kind);
SampleKind parse_sample_kind(std::string_view text);

struct TrainingSequence {
  std::string record_id;
  std::vector<std::string> tokens;
  std::vector<bool> loss_mask;
  SampleKind sample_kind = SampleKind::Feedback;
  std::size_t turn_count = 0;

  [[nodiscard]] std::size_t masked_count() const;
};

void to_json(Json& j, const TrainingSequence& s);
void from_json(const Json& j, TrainingSequence& s);

class InvalidRecord : public Error {
 public:
  InvalidRecord(const std::string& record_id, std::vector<Violation> violations);
  [[nodiscard]] const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

class SequenceTooLong : public Error {
 public:
  using Error::Error;
};

struct SerializeOptions {
  bool critique_on = true;
  bool refinement_on = true;
  std::size_t max_length = 0;  // 0 means unlimited; longer sequences are an error, never truncated
};

/// [<image> context][<question> q] then per turn [<verbalizer>][critique] r [<refinement> s].
/// The mask is true exactly on the response tokens, so under left-to-right factorization
/// each r^j is predicted from m, q, n^j, l'^j and every earlier turn, and s^j comes after r^j.
TrainingSequence serialize(const FeedbackRecord& record, const SerializeOptions& options = {});

/// One sequence per turn j: the prefix of r^j followed by r^j, masked on r^j only.
std::vector<TrainingSequence> serialize_per_turn(const FeedbackRecord& record, const SerializeOptions& options = {});

/// [<image> context] caption, masked on the caption.
TrainingSequence serialize_regularization(const std::string& id, std::string_view image_context,
                                          std::string_view caption, const SerializeOptions& options = {});

struct CaptionPair {
  std::string image_context;
  std::string caption;
};

/// Inverse of serialize_regularization on tokenized text.
CaptionPair deserialize_regularization(const TrainingSequence& sequence);

/// The control prefix prepended before generation: <excellent> [Nice response.]
std::vector<std::string> inference_prefix();

/// Ablation switches that select a corpus variant.
struct CorpusOptions {
  SerializeOptions sequence;
  bool rlaif_on = true;            // off: records keep only the ground-truth turn
  std::set<Aspect> aspects;        // empty means every aspect
};

/// Record as the ablation sees it: refinement_off keeps the first turn plus the ground truth
/// (without refinement text), rlaif_off keeps the ground truth alone. nullopt when the
/// aspect is filtered out.
std::optional<FeedbackRecord> apply_ablation(const FeedbackRecord& record, const CorpusOptions& options);

/// Serializes records (after apply_ablation) followed by regularization pairs, in input order.
std::vector<TrainingSequence> serialize_corpus(std::span<const FeedbackRecord> records,
                                               std::span<const CaptionPair> regularization,
                                               const CorpusOptions& options);

}  // namespace nlf::serialize
