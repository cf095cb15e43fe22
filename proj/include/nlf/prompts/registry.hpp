#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nlf/core/error.hpp"
#include "nlf/core/types.hpp"

namespace nlf::prompts {

namespace fs = std::filesystem;

namespace ids {
inline constexpr std::string_view kHonestyAnnotation = "honesty_annotation";
inline constexpr std::string_view kHelpfulnessAnnotation = "helpfulness_annotation";
inline constexpr std::string_view kHarmlessnessAnnotation = "harmlessness_annotation";
inline constexpr std::string_view kLlavaEvalConversation = "llava_eval_conversation";
inline constexpr std::string_view kLlavaEvalDescription = "llava_eval_description";
inline constexpr std::string_view kLlavaEvalReasoning = "llava_eval_reasoning";
inline constexpr std::string_view kLlavaBench = "llava_bench";
inline constexpr std::string_view kVlsafeEval = "vlsafe_eval";
inline constexpr std::string_view kVqaJudge = "vqa_judge";
inline constexpr std::string_view kCritiqueSummarize = "critique_summarize";
inline constexpr std::string_view kVisualDependenceFilter = "visual_dependence_filter";
inline constexpr std::string_view kRefinementProvider = "refinement_provider";
inline constexpr std::string_view kFailureModeClassifier = "failure_mode_classifier";
}  // namespace ids

/// Annotation template for an aspect.
std::string_view annotation_template(Aspect aspect);

struct PromptTemplate {
  std::string template_id;
  std::string body;
  std::set<std::string> required_slots;
  std::string sha256;
};

class UnknownTemplate : public Error {
 public:
  using Error::Error;
};

class MissingSlot : public Error {
 public:
  using Error::Error;
};

class UnexpectedSlot : public Error {
 public:
  using Error::Error;
};

/// Slot names in `body`, in order of appearance. A slot is `{name}` with name matching
/// [a-z_][a-z0-9_]*; other braces (such as the literal `{{}}` in the dictionary-format
/// prompts) are plain text.
std::vector<std::string> find_slots(std::string_view body);

class PromptRegistry {
 public:
  /// Every *.txt file under `dir`; the template id is the file stem, the body the exact bytes.
  static PromptRegistry load_directory(const fs::path& dir);
  /// The templates shipped with the toolkit.
  static PromptRegistry builtin();
  static fs::path builtin_directory();

  /// Throws InvalidArgument if a slot occurs more than once or the id is already taken.
  void add(std::string template_id, std::string body);
  void merge_directory(const fs::path& dir);

  [[nodiscard]] const PromptTemplate& get(std::string_view template_id) const;
  [[nodiscard]] bool contains(std::string_view template_id) const;
  [[nodiscard]] std::vector<std::string> template_ids() const;

  /// Substitutes every slot verbatim in a single pass; slot values are never rescanned.
  [[nodiscard]] std::string render(std::string_view template_id,
                                   const std::map<std::string, std::string>& slots) const;

  /// template id -> sha256 of the body, for run manifests.
  [[nodiscard]] std::map<std::string, std::string> digests() const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

/// Instruction asking the judge to compress a scoring reason into a 5-7 word critique.
/// Throws InvalidArgument on an empty reason.
std::string summarize_critique_prompt(const PromptRegistry& registry, std::string_view reason);

}  // namespace nlf::prompts
