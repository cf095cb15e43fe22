#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlf/annotate/engine.hpp"
#include "nlf/core/json.hpp"
#include "nlf/core/types.hpp"
#include "nlf/core/util.hpp"

namespace nlf::dataset {

struct QaPair {
  std::string question;
  std::string answer;
};

/// Source sample as delivered by the operator. Multi-turn conversations list several
/// question/answer pairs about the same image.
struct RawSample {
  std::string id;
  std::string image_id;
  std::string image_ref;  // defaults to image_id
  DataType data_type = DataType::Conversation;
  std::optional<Aspect> aspect;
  std::string image_context;
  std::vector<QaPair> turns;
};

/// Accepts either {"turns": [{"question","answer"}...]} or flat "question"/"ground_truth".
void from_json(const Json& j, RawSample& s);
void to_json(Json& j, const RawSample& s);

/// One single-question sample as written to the split files.
struct SplitSample {
  std::string id;
  std::string source_id;
  std::string image_id;
  std::string image_ref;
  DataType data_type = DataType::Conversation;
  Aspect aspect = Aspect::Helpfulness;
  std::string image_context;
  std::string question;
  std::string ground_truth;

  [[nodiscard]] annotate::Sample to_annotation_sample() const;
};

void to_json(Json& j, const SplitSample& s);
void from_json(const Json& j, SplitSample& s);

/// Aspect used when the raw sample names none: adversarial prompts are judged for
/// harmlessness, everything else for helpfulness.
Aspect default_aspect(DataType type);

struct SplitRuleSet {
  bool dedupe_images_in_feedback = true;
  bool require_visual_dependence = false;
  bool explode_multiturn = true;
  /// Feedback-stage targets per data type; everything not drawn goes to SFT.
  std::map<DataType, std::int64_t> target_counts;

  void validate() const;
};

void to_json(Json& j, const SplitRuleSet& r);
void from_json(const Json& j, SplitRuleSet& r);

class InsufficientEligible : public Error {
 public:
  InsufficientEligible(DataType type, std::int64_t needed, std::int64_t available);
  [[nodiscard]] std::int64_t needed() const noexcept { return needed_; }
  [[nodiscard]] std::int64_t available() const noexcept { return available_; }

 private:
  std::int64_t needed_;
  std::int64_t available_;
};

class CountMismatch : public Error {
 public:
  using Error::Error;
};

/// Decides for a batch of candidates whether each one needs the image to be answered.
using VisualDependenceFilter = std::function<std::vector<bool>(std::span<const SplitSample>)>;

/// Judge-backed filter: asks whether each question can be answered without the image and
/// keeps the ones answered "No". Replies that stay unparseable after retries count as not
/// visually dependent, so doubtful samples stay out of the feedback set.
VisualDependenceFilter make_visual_dependence_filter(std::shared_ptr<gateway::ChatClient> client,
                                                     const prompts::PromptRegistry& registry,
                                                     std::string judge_model, int parallelism);

struct SplitResult {
  std::vector<SplitSample> sft;
  std::vector<SplitSample> feedback;
  DatasetManifest manifest;
};

/// One sample per question; multi-turn sources become "{id}#t{k}" when exploding, otherwise
/// only their first pair is kept.
std::vector<SplitSample> explode(std::span<const RawSample> raw, bool explode_multiturn);

/// Draws the feedback set to the target counts, seeded-uniformly among eligible samples,
/// with each image id used at most once across the whole feedback set. The visual
/// dependence filter only gates feedback eligibility; filtered samples stay in SFT.
/// Both outputs are sorted by id.
SplitResult build_splits(std::span<const RawSample> raw, const SplitRuleSet& rules, std::uint64_t seed,
                         const VisualDependenceFilter& filter = {});

/// Seeded uniform partition of indices [0, pool_size) into sorted train and test index lists.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> freeze_split_indices(std::size_t pool_size,
                                                                                   std::size_t train_n,
                                                                                   std::size_t test_n,
                                                                                   std::uint64_t seed);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> freeze_split(const std::vector<T>& pool, std::size_t train_n,
                                                       std::size_t test_n, std::uint64_t seed) {
  auto [train_idx, test_idx] = freeze_split_indices(pool.size(), train_n, test_n, seed);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (auto i : train_idx) out.first.push_back(pool[i]);
  for (auto i : test_idx) out.second.push_back(pool[i]);
  return out;
}

}  // namespace nlf::dataset
