#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nlf/core/error.hpp"

namespace nlf {

enum class Aspect { Helpfulness, Honesty, Harmlessness };

std::string_view to_string(Aspect aspect);
Aspect parse_aspect(std::string_view text);

/// Judge score on the four-level scale used for every feedback aspect.
class Rating {
 public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 4;

  /// Throws InvalidArgument outside [1, 4].
  explicit Rating(int value);

  [[nodiscard]] int value() const noexcept { return value_; }
  [[nodiscard]] bool optimal() const noexcept { return value_ == kMax; }

  friend bool operator==(Rating, Rating) = default;
  friend auto operator<=>(Rating, Rating) = default;

 private:
  int value_;
};

/// Rating word used inside training sequences: 1 bad, 2 mediocre, 3 good, 4 excellent.
std::string_view verbalize(Rating rating) noexcept;

/// Inverse of verbalize. Throws InvalidArgument on any other word.
Rating devebalize(std::string_view word);

inline constexpr std::array<std::string_view, 4> kVerbalizerWords = {"bad", "mediocre", "good",
                                                                    "excellent"};

/// Critique attached to the ground-truth turn; also the inference-time critique.
inline constexpr std::string_view kOptimalCritique = "Nice response.";

struct InteractionTurn {
  std::string response;
  Rating rating{Rating::kMin};
  std::string reason;
  std::string critique;
  std::optional<std::string> refinement;

  friend bool operator==(const InteractionTurn&, const InteractionTurn&) = default;
};

struct FeedbackRecord {
  std::string id;
  Aspect aspect = Aspect::Helpfulness;
  std::string image_ref;
  std::string image_context;
  std::string question;
  std::string ground_truth;
  std::vector<InteractionTurn> turns;

  friend bool operator==(const FeedbackRecord&, const FeedbackRecord&) = default;
};

inline constexpr std::size_t kMaxTurns = 4;

struct Violation {
  std::string field;
  std::string rule;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Checks every record invariant. Returns an empty list iff the record is well formed.
std::vector<Violation> validate_record(const FeedbackRecord& record);

enum class Stage { Sft, Feedback };
enum class DataType { Conversation, Reasoning, Adversarial };

std::string_view to_string(Stage stage);
std::string_view to_string(DataType type);
Stage parse_stage(std::string_view text);
DataType parse_data_type(std::string_view text);

struct DatasetManifest {
  std::map<std::pair<Stage, DataType>, std::int64_t> split_counts;
  std::uint64_t seed = 0;
  std::string provider_config_hash;
  std::map<std::string, std::string> template_hashes;

  [[nodiscard]] std::int64_t total() const;
  [[nodiscard]] std::int64_t count(Stage stage, DataType type) const;
};

struct LossSpec {
  double alpha = 1.0;

  /// Throws InvalidArgument for negative or non-finite alpha.
  void validate() const;
};

}  // namespace nlf
