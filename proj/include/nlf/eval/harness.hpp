#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nlf/condlm/model.hpp"
#include "nlf/condlm/synthetic.hpp"
#include "nlf/core/json.hpp"
#include "nlf/gateway/client.hpp"
#include "nlf/metrics/metrics.hpp"
#include "nlf/prompts/registry.hpp"

namespace nlf::eval {

/// One line of an evaluation dataset: {id, question, scene, reference, category}. Captioning
/// items may list ground-truth `objects`; VQA items may carry a ready `prediction`.
struct EvalItem {
  std::string id;
  std::string question;
  std::string scene;
  std::string reference;
  std::string category;
  std::optional<std::set<std::string>> objects;
  std::optional<std::string> prediction;
};

void to_json(Json& j, const EvalItem& item);
void from_json(const Json& j, EvalItem& item);

std::vector<EvalItem> load_dataset(const std::string& path);

enum class TaskKind { LlavaEval, LlavaBench, Captioning, VLSafe, VQA, MultiTurn };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct EvalTask {
  TaskKind kind = TaskKind::LlavaEval;
  /// LlavaEval: conversation | description | reasoning; empty uses each item's category.
  std::string category;
  int instruction_id = 1;         // Captioning
  std::string dataset_tag;        // VQA
  std::size_t sample_n = 1000;    // VQA
  std::uint64_t seed = 0;         // VQA sampling
  int max_turns = 4;              // MultiTurn
  std::vector<std::string> providers;  // MultiTurn feedback provider model ids

  void validate() const;
};

void to_json(Json& j, const EvalTask& t);
void from_json(const Json& j, EvalTask& t);

/// Captioning instructions 1 and 2.
std::string_view captioning_instruction(int id);

/// Template id judging a LlavaEval category.
std::string_view llava_eval_template(std::string_view category);

/// What the model under test is asked: the item, the instruction actually posed (the
/// question, or the captioning instruction), and earlier answers with the feedback each got.
struct ModelPrompt {
  const EvalItem* item = nullptr;
  std::string instruction;
  struct Exchange {
    std::string response;
    std::string feedback;
  };
  std::vector<Exchange> history;
};

using ModelUnderTest = std::function<std::string(const ModelPrompt&)>;

/// Chat-backed model: scene text and instruction in the first user turn, then each earlier
/// answer followed by its feedback. With `control_prefix` the first user turn opens with
/// the inference control prefix.
ModelUnderTest chat_model(std::shared_ptr<gateway::ChatClient> client, std::string model_id,
                          bool control_prefix = false, int max_tokens = 512);
gateway::ChatRequest model_request(const ModelPrompt& prompt, const std::string& model_id, bool control_prefix,
                                   int max_tokens);

struct JudgeConfig {
  std::string model = "judge";
  int parse_attempts = 3;
  int max_tokens = 1024;
};

struct EvalOptions {
  JudgeConfig judge;
  int parallelism = 1;
  metrics::ChairVariant chair_variant = metrics::ChairVariant::Original;
  const metrics::ObjectLexicon* lexicon = nullptr;  // required for Captioning
};

struct ItemResult {
  std::string id;
  std::string category;
  bool valid = true;
  std::string response;
  std::map<std::string, double> scores;
  std::string error;
};

void to_json(Json& j, const ItemResult& r);

struct EvalReport {
  std::string task;
  /// Judge means on the 0-100 presentation scale, keyed by category (LlavaEval), by score
  /// key and "category.key" (LlavaBench), plus "overall".
  std::map<std::string, double> means;
  std::map<std::string, double> raw_means;  // same keys, judge scale
  std::optional<metrics::ChairResult> chair;
  std::map<std::string, double> binary_percent;
  std::optional<double> vqa_accuracy;
  std::vector<double> turn_curve;      // MultiTurn, 0-100 scale, averaged over providers
  std::vector<double> raw_turn_curve;  // same, judge scale
  std::map<std::string, std::vector<double>> provider_curves;
  std::size_t item_count = 0;
  std::size_t invalid_count = 0;
  std::vector<ItemResult> items;
  std::string manifest;

  [[nodiscard]] Json to_json() const;
  /// turn,score,raw_score[,provider columns]
  [[nodiscard]] std::string curve_csv() const;
};

class Evaluator {
 public:
  Evaluator(std::shared_ptr<gateway::ChatClient> judge_client, const prompts::PromptRegistry& registry,
            EvalOptions options);

  /// Throws EmptySet for an empty dataset; AuthError propagates; other per-item failures
  /// mark the item invalid.
  EvalReport run(const EvalTask& task, std::span<const EvalItem> dataset, const ModelUnderTest& model);

  EvalReport run_single_turn(const EvalTask& task, std::span<const EvalItem> dataset, const ModelUnderTest& model);
  EvalReport run_multiturn(const EvalTask& task, std::span<const EvalItem> dataset, const ModelUnderTest& model);
  /// VQA items use their `prediction` when present, otherwise ask the model.
  EvalReport run_vqa(const EvalTask& task, std::span<const EvalItem> dataset, const ModelUnderTest& model);

  /// Scores one response with the LlavaEval judge for the item's category (0-10).
  std::optional<double> helpfulness_score(const EvalItem& item, const std::string& response, std::string* error);
  /// Refinement feedback from a provider model.
  std::string provider_feedback(const std::string& provider, const EvalItem& item, const std::string& response);

 private:
  std::string ask(const std::string& model, const std::string& prompt, std::string_view reminder);
  template <typename Fn>
  void for_each_item(std::size_t n, Fn&& fn);

  std::shared_ptr<gateway::ChatClient> client_;
  const prompts::PromptRegistry& registry_;
  EvalOptions options_;
};

/// Seeded subset of `n` items (all when the dataset is smaller), returned in id order.
std::vector<EvalItem> sample_items(std::span<const EvalItem> dataset, std::size_t n, std::uint64_t seed);

// Ablations over the toy conditional model.

struct AblationConfig {
  std::string name;
  bool rlaif_on = true;
  bool critique_on = true;
  bool refinement_on = true;
  std::set<Aspect> aspects;  // empty keeps every aspect
};

void to_json(Json& j, const AblationConfig& c);
void from_json(const Json& j, AblationConfig& c);

/// Full configuration plus one row per removed component.
std::vector<AblationConfig> default_ablation_configs();

struct AblationSetup {
  condlm::SyntheticSpec task;
  condlm::TrainConfig train;
  std::uint64_t held_out_seed = 99;
  std::size_t held_out_captions = 80;
};

struct AblationRow {
  AblationConfig config;
  std::size_t sequences = 0;
  std::size_t critique_tokens = 0;
  double final_loss = 0.0;
  double conditioning_kl = 0.0;   // first position after the prefixes
  double good_log_prob = 0.0;     // greedy continuation under D_good, mean per token
  double held_out_regularization = 0.0;
};

void to_json(Json& j, const AblationRow& r);

std::vector<AblationRow> run_ablation_matrix(std::span<const AblationConfig> configs, const AblationSetup& setup);
std::string ablation_table_csv(std::span<const AblationRow> rows);

}  // namespace nlf::eval
