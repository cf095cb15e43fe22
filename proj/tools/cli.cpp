#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>

#include "nlf/annotate/batch.hpp"
#include "nlf/condlm/model.hpp"
#include "nlf/condlm/synthetic.hpp"
#include "nlf/core/io.hpp"
#include "nlf/core/json.hpp"
#include "nlf/core/util.hpp"
#include "nlf/curate/service.hpp"
#include "nlf/dataset/curation.hpp"
#include "nlf/dataset/splits.hpp"
#include "nlf/eval/harness.hpp"
#include "nlf/gateway/client.hpp"
#include "nlf/metrics/metrics.hpp"
#include "nlf/prompts/registry.hpp"
#include "nlf/serialize/sequence.hpp"

namespace nlf::cli {

namespace {

class ConfigError : public Error {
 public:
  using Error::Error;
};

Json defaults() {
  return Json{
      {"provider", ""},
      {"parallelism", 1},
      {"max_failure_rate", 0.05},
      {"models", {{"policy", "policy"}, {"judge", "judge"}}},
      {"profiles",
       {{"fixtures", {{"kind", "fixtures"}, {"archive", "fixtures.jsonl"}}},
        {"remote",
         {{"kind", "http"},
          {"endpoint_url", "https://api.openai.com/v1/chat/completions"},
          {"auth_env_var", "OPENAI_API_KEY"}}}}},
      {"split", {{"rules", dataset::SplitRuleSet{}}}},
      {"annotate", {{"max_turns", 4}, {"parse_attempts", 3}, {"max_tokens", 1024}, {"incontext_example", ""}}},
      {"serialize",
       {{"critique_on", true},
        {"refinement_on", true},
        {"rlaif_on", true},
        {"aspects", Json::array()},
        {"max_length", 0},
        {"per_turn", false}}},
      {"train",
       {{"step_size", 1.0},
        {"epochs", 200},
        {"alpha", 1.0},
        {"init_scale", 0.0},
        {"features", condlm::FeatureSpec{}},
        {"synthetic", false},
        {"ablation", false},
        {"synthetic_spec", Json::object()}}},
      {"eval",
       {{"task", "llava_eval"},
        {"category", ""},
        {"instruction_id", 1},
        {"dataset_tag", ""},
        {"sample_n", 1000},
        {"max_turns", 4},
        {"providers", Json::array()},
        {"chair_variant", "original"},
        {"lexicon", ""},
        {"control_prefix", false},
        {"toy_length", 12},
        {"judge_parse_attempts", 3}}},
      {"metrics", {{"kind", "chair"}, {"lexicon", ""}, {"chair_variant", "original"}}},
      {"report", {{"inputs", Json::array()}}},
      {"curate",
       {{"host", "127.0.0.1"},
        {"port", 8080},
        {"token_env", "NLF_CURATE_TOKEN"},
        {"no_auth", false},
        {"dry_run", false},
        {"default_page_size", 50},
        {"max_page_size", 500}}},
  };
}

/// Collects flags that were actually given into a JSON patch over the config.
class Flags {
 public:
  using Setter = std::function<void(Json&)>;

  template <typename T>
  CLI::Option* option(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(name, *value, help);
    setters_.push_back([opt, value, pointer](Json& patch) {
      if (opt->count() > 0) patch[Json::json_pointer(pointer)] = *value;
    });
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    auto* opt = app->add_flag(name, *value, help);
    setters_.push_back([opt, value, pointer](Json& patch) {
      if (opt->count() > 0) patch[Json::json_pointer(pointer)] = *value;
    });
    return opt;
  }

  /// `--target conversation=2` style options.
  CLI::Option* pairs(CLI::App* app, const std::string& name, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<std::vector<std::string>>();
    auto* opt = app->add_option(name, *value, help);
    setters_.push_back([opt, value, pointer](Json& patch) {
      if (opt->count() == 0) return;
      for (const auto& p : *value) {
        const auto eq = p.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("expected key=value, got '{}'", p));
        std::int64_t n = 0;
        try {
          n = std::stoll(p.substr(eq + 1));
        } catch (const std::exception&) {
          throw ConfigError(fmt::format("'{}' does not end in an integer", p));
        }
        patch[Json::json_pointer(pointer + "/" + p.substr(0, eq))] = n;
      }
    });
    return opt;
  }

  [[nodiscard]] Json patch() const {
    Json j = Json::object();
    for (const auto& s : setters_) s(j);
    return j;
  }

 private:
  std::vector<Setter> setters_;
};

std::string file_digest(const fs::path& path) { return sha256_hex(read_text(path)); }

/// State of one invocation: the effective config, lazily built provider client and the
/// manifest being assembled.
class Run {
 public:
  Run(std::string command, Json config, std::ostream& log, const ProviderKinds& kinds)
      : command_(std::move(command)), config_(std::move(config)), log_(log), kinds_(kinds) {}

  [[nodiscard]] const Json& config() const { return config_; }
  [[nodiscard]] std::string section_name() const {
    if (command_ == "train-toy") return "train";
    if (command_ == "curate-serve") return "curate";
    return command_;
  }
  [[nodiscard]] const Json& section() const { return config_.at(section_name()); }
  [[nodiscard]] const std::string& command() const { return command_; }

  template <typename... Args>
  void info(fmt::format_string<Args...> f, Args&&... args) {
    log_ << "[nlf " << command_ << "] " << fmt::format(f, std::forward<Args>(args)...) << '\n';
  }

  std::uint64_t seed() const {
    if (!config_.contains("seed") || config_.at("seed").is_null()) {
      throw ConfigError(fmt::format("'{}' samples and needs an explicit --seed (or \"seed\" in the config)", command_));
    }
    if (!config_.at("seed").is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
    return config_.at("seed").get<std::uint64_t>();
  }

  int parallelism() const {
    const int p = config_.at("parallelism").get<int>();
    if (p < 1) throw ConfigError("parallelism must be >= 1");
    return p;
  }

  double max_failure_rate() const {
    const double r = config_.at("max_failure_rate").get<double>();
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("max_failure_rate must be in [0, 1]");
    return r;
  }

  std::string model(const std::string& role) const { return config_.at("models").at(role).get<std::string>(); }

  /// A required path from the subcommand's section.
  fs::path path(const std::string& key, const std::string& flag) const {
    const auto& s = section();
    if (!s.contains(key) || !s.at(key).is_string() || s.at(key).get<std::string>().empty()) {
      throw ConfigError(fmt::format("'{}' needs {}", command_, flag));
    }
    return s.at(key).get<std::string>();
  }

  std::optional<fs::path> optional_path(const std::string& key) const {
    const auto& s = section();
    if (!s.contains(key) || !s.at(key).is_string() || s.at(key).get<std::string>().empty()) return std::nullopt;
    return fs::path(s.at(key).get<std::string>());
  }

  void input(const std::string& role, const fs::path& p) {
    if (!fs::is_regular_file(p)) throw ConfigError(fmt::format("input {} '{}' does not exist", role, p.string()));
    inputs_[role] = Json{{"path", p.string()}, {"sha256", file_digest(p)}};
  }

  void output(const std::string& role, const fs::path& p) {
    outputs_[role] = Json{{"path", p.string()}, {"sha256", file_digest(p)}};
  }

  Json& summary() { return summary_; }

  const prompts::PromptRegistry& registry() {
    if (!registry_) {
      if (config_.contains("templates") && !config_.at("templates").get<std::string>().empty()) {
        registry_ = prompts::PromptRegistry::load_directory(config_.at("templates").get<std::string>());
      } else {
        registry_ = prompts::PromptRegistry::builtin();
      }
    }
    return *registry_;
  }

  bool has_provider() const { return !config_.at("provider").get<std::string>().empty(); }

  std::shared_ptr<gateway::ChatClient> client() {
    if (client_) return client_;
    if (!has_provider()) throw ConfigError(fmt::format("'{}' needs --provider", command_));
    const auto name = config_.at("provider").get<std::string>();
    gateway::ProviderConfig cfg;
    bool virtual_time = false;
    auto provider = make_provider(name, cfg, virtual_time, provider_, 0);
    std::shared_ptr<gateway::Clock> clock;
    if (virtual_time) {
      clock = std::make_shared<gateway::ManualClock>();
    } else {
      clock = std::make_shared<gateway::SystemClock>();
    }
    const std::uint64_t jitter = config_.contains("seed") && config_.at("seed").is_number_unsigned()
                                     ? config_.at("seed").get<std::uint64_t>()
                                     : 0;
    client_ = std::make_shared<gateway::ChatClient>(cfg, std::move(provider), clock, jitter);
    registry();  // template digests belong in any manifest that talked to a model
    return client_;
  }

  void set_manifest_path(fs::path p) { manifest_path_ = std::move(p); }
  [[nodiscard]] const std::optional<fs::path>& manifest_path() const { return manifest_path_; }

  void write_manifest(int exit_code, const std::string& error = {}) {
    if (!manifest_path_) return;
    Json config{{section_name(), section()}};
    for (const auto* key : {"provider", "parallelism", "max_failure_rate", "models", "templates"}) {
      if (config_.contains(key)) config[key] = config_.at(key);
    }
    if (has_provider()) config["profiles"] = config_.at("profiles");
    Json m{{"command", command_},
           {"exit_code", exit_code},
           {"config", config},
           {"seed", config_.contains("seed") ? config_.at("seed") : Json(nullptr)},
           {"provider", provider_},
           {"inputs", inputs_},
           {"outputs", outputs_},
           {"summary", summary_}};
    if (registry_) m["templates"] = registry_->digests();
    if (!error.empty()) m["error"] = error;
    if (manifest_path_->has_parent_path()) fs::create_directories(manifest_path_->parent_path());
    write_text(*manifest_path_, m.dump(2) + "\n");
  }

 private:
  std::shared_ptr<gateway::Provider> make_provider(const std::string& name, gateway::ProviderConfig& cfg,
                                                   bool& virtual_time, Json& info, int depth) {
    if (depth > 4) throw ConfigError("provider profiles nest too deeply");
    const auto& profiles = config_.at("profiles");
    if (!profiles.contains(name)) throw ConfigError(fmt::format("unknown provider profile '{}'", name));
    const auto& p = profiles.at(name);
    const auto kind = p.value("kind", std::string{});
    if (depth == 0) {
      try {
        cfg = p.get<gateway::ProviderConfig>();
      } catch (const Json::exception& e) {
        throw ConfigError(fmt::format("profile '{}': {}", name, e.what()));
      }
    }
    info = Json{{"profile", name}, {"kind", kind}, {"config_hash", cfg.config_hash()}};
    if (kind == "fixtures") {
      const fs::path archive = p.value("archive", std::string{});
      if (!fs::is_regular_file(archive)) {
        throw ConfigError(fmt::format("fixture archive '{}' for profile '{}' does not exist", archive.string(), name));
      }
      info["archive"] = Json{{"path", archive.string()}, {"sha256", file_digest(archive)}};
      virtual_time = true;
      return std::make_shared<gateway::FixtureProvider>(archive);
    }
    if (auto it = kinds_.find(kind); it != kinds_.end()) {
      virtual_time = true;  // in-process, nothing to throttle
      return it->second();
    }
    if (kind == "http") return std::make_shared<gateway::HttpProvider>(p.get<gateway::ProviderConfig>());
    if (kind == "record") {
      const fs::path archive = p.value("archive", std::string{});
      if (archive.empty()) throw ConfigError(fmt::format("record profile '{}' needs an archive", name));
      Json inner_info;
      auto inner = make_provider(p.value("inner", std::string{}), cfg, virtual_time, inner_info, depth + 1);
      info["archive"] = archive.string();
      info["inner"] = inner_info;
      return std::make_shared<gateway::RecordingProvider>(std::move(inner), archive);
    }
    throw ConfigError(fmt::format("profile '{}' has unknown kind '{}' (fixtures, http or record)", name, kind));
  }

  std::string command_;
  Json config_;
  std::ostream& log_;
  const ProviderKinds& kinds_;
  Json inputs_ = Json::object();
  Json outputs_ = Json::object();
  Json summary_ = Json::object();
  Json provider_ = nullptr;
  std::optional<prompts::PromptRegistry> registry_;
  std::shared_ptr<gateway::ChatClient> client_;
  std::optional<fs::path> manifest_path_;
};

template <typename T>
std::vector<T> read_rows(const fs::path& path, const std::string& what) {
  std::vector<T> out;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(path)) {
    ++line;
    try {
      out.push_back(row.get<T>());
    } catch (const std::exception& e) {
      const auto id = row.is_object() && row.contains("id") ? row.at("id").dump() : std::string("?");
      throw ConfigError(fmt::format("{} row {} (id {}) in {}: {}", what, line, id, path.string(), e.what()));
    }
  }
  return out;
}

template <typename T>
Json rows_json(const std::vector<T>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) out.push_back(r);
  return out;
}

int over_threshold(Run& run, std::size_t failures, std::size_t total) {
  run.summary()["failures"] = failures;
  run.max_failure_rate();
  if (total == 0 || failures == 0) return kExitOk;
  const double rate = static_cast<double>(failures) / static_cast<double>(total);
  if (rate > run.max_failure_rate()) {
    run.info("{} of {} items failed ({:.2f}%), above the {:.2f}% threshold", failures, total, 100.0 * rate,
             100.0 * run.max_failure_rate());
    return kExitItemFailures;
  }
  return kExitOk;
}

// split

int cmd_split(Run& run) {
  const auto& c = run.section();
  const auto in = run.path("in", "--in");
  const auto out_dir = run.path("out_dir", "--out-dir");
  run.input("raw", in);
  const auto seed = run.seed();
  fs::create_directories(out_dir);

  if (c.contains("freeze")) {
    const auto train_n = c.at("freeze").at("train").get<std::size_t>();
    const auto test_n = c.at("freeze").at("test").get<std::size_t>();
    const auto pool = read_jsonl(in);
    if (train_n + test_n != pool.size()) {
      throw ConfigError(fmt::format("freeze split {} + {} does not match the pool of {}", train_n, test_n, pool.size()));
    }
    const auto [train, test] = dataset::freeze_split(pool, train_n, test_n, seed);
    write_jsonl(out_dir / "train.jsonl", train);
    write_jsonl(out_dir / "test.jsonl", test);
    run.output("train", out_dir / "train.jsonl");
    run.output("test", out_dir / "test.jsonl");
    run.summary() = Json{{"pool", pool.size()}, {"train", train.size()}, {"test", test.size()}};
    run.info("froze {} rows into {} train / {} test", pool.size(), train.size(), test.size());
    return kExitOk;
  }

  const auto raw = read_rows<dataset::RawSample>(in, "raw sample");
  dataset::SplitRuleSet rules;
  try {
    rules = c.at("rules").get<dataset::SplitRuleSet>();
    rules.validate();
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("split rules: {}", e.what()));
  }
  dataset::VisualDependenceFilter filter;
  if (rules.require_visual_dependence) {
    filter = dataset::make_visual_dependence_filter(run.client(), run.registry(), run.model("judge"), run.parallelism());
  }
  dataset::SplitResult result;
  try {
    result = dataset::build_splits(raw, rules, seed, filter);
  } catch (const dataset::InsufficientEligible& e) {
    throw ConfigError(e.what());
  }
  write_jsonl(out_dir / "sft.jsonl", rows_json(result.sft));
  write_jsonl(out_dir / "feedback.jsonl", rows_json(result.feedback));
  run.output("sft", out_dir / "sft.jsonl");
  run.output("feedback", out_dir / "feedback.jsonl");
  Json counts = Json::object();
  for (const auto& [key, n] : result.manifest.split_counts) {
    counts[fmt::format("{}.{}", to_string(key.first), to_string(key.second))] = n;
  }
  run.summary() = Json{{"sft", result.sft.size()}, {"feedback", result.feedback.size()}, {"split_counts", counts}};
  run.info("{} sft / {} feedback samples", result.sft.size(), result.feedback.size());
  return kExitOk;
}

// annotate

annotate::TurnPolicy turn_policy(const Json& c) {
  annotate::TurnPolicy policy;
  policy.max_turns = c.value("max_turns", policy.max_turns);
  if (c.contains("continue_thresholds")) {
    policy.continue_thresholds.clear();
    for (const auto& [turn, ratings] : c.at("continue_thresholds").items()) {
      policy.continue_thresholds[std::stoi(turn)] = ratings.get<std::set<int>>();
    }
  }
  try {
    policy.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(fmt::format("turn policy: {}", e.what()));
  }
  return policy;
}

int cmd_annotate(Run& run) {
  const auto& c = run.section();
  const auto in = run.path("in", "--in");
  const auto out = run.path("out", "--out");
  run.input("samples", in);
  run.seed();
  const auto checkpoint = run.optional_path("checkpoint").value_or(fs::path(out.string() + ".checkpoint.jsonl"));
  auto samples = read_rows<annotate::Sample>(in, "sample");
  const auto total = samples.size();

  annotate::AnnotatorConfig acfg;
  acfg.judge_model = run.model("judge");
  acfg.incontext_example = c.value("incontext_example", std::string{});
  acfg.parse_attempts = c.value("parse_attempts", acfg.parse_attempts);
  acfg.max_tokens = c.value("max_tokens", acfg.max_tokens);

  auto client = run.client();
  const auto& registry = run.registry();
  const auto policy_model = run.model("policy");
  annotate::WorkerFactory factory{
      [client, policy_model] { return std::make_unique<annotate::ChatGenerator>(client, policy_model); },
      [client, &registry, acfg] { return std::make_unique<annotate::JudgeAnnotator>(client, registry, acfg); }};

  annotate::BatchOptions options;
  options.policy = turn_policy(c);
  options.workers = run.parallelism();
  options.checkpoint_path = checkpoint;
  options.output_path = out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());

  const auto report = annotate::run_batch(std::move(samples), factory, options);
  run.output("records", out);
  run.summary() = report.to_json();
  run.summary()["checkpoint"] = checkpoint.string();
  for (const auto& id : report.invalid_ids) run.info("sample {} invalid: judge output never parsed", id);
  for (const auto& id : report.aborted_ids) run.info("sample {} aborted; a rerun resumes it", id);
  run.info("{} completed, {} invalid, {} aborted, {} already done", report.completed, report.invalid, report.aborted,
           report.skipped);
  return over_threshold(run, report.invalid + report.aborted, total);
}

// serialize

int cmd_serialize(Run& run) {
  const auto& c = run.section();
  const auto in = run.path("in", "--in");
  const auto out = run.path("out", "--out");
  run.input("records", in);
  const auto records = read_rows<FeedbackRecord>(in, "feedback record");

  serialize::CorpusOptions opts;
  opts.sequence.critique_on = c.value("critique_on", true);
  opts.sequence.refinement_on = c.value("refinement_on", true);
  opts.sequence.max_length = c.value("max_length", std::size_t{0});
  opts.rlaif_on = c.value("rlaif_on", true);
  try {
    for (const auto& a : c.value("aspects", std::vector<std::string>{})) opts.aspects.insert(parse_aspect(a));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const bool per_turn = c.value("per_turn", false);

  std::vector<Json> rows;
  std::size_t failures = 0;
  std::size_t filtered = 0;
  std::size_t masked = 0;
  auto emit = [&](const serialize::TrainingSequence& s) {
    masked += s.masked_count();
    rows.push_back(s);
  };
  for (const auto& record : records) {
    if (const auto violations = validate_record(record); !violations.empty()) {
      ++failures;
      for (const auto& v : violations) run.info("record {}: {} {}", record.id, v.field, v.rule);
      continue;
    }
    try {
      const auto variant = serialize::apply_ablation(record, opts);
      if (!variant) {
        ++filtered;
        continue;
      }
      if (per_turn) {
        for (const auto& s : serialize::serialize_per_turn(*variant, opts.sequence)) emit(s);
      } else {
        emit(serialize::serialize(*variant, opts.sequence));
      }
    } catch (const serialize::InvalidRecord& e) {
      ++failures;
      for (const auto& v : e.violations()) run.info("record {}: {} {}", record.id, v.field, v.rule);
    } catch (const serialize::SequenceTooLong& e) {
      ++failures;
      run.info("record {}: {}", record.id, e.what());
    }
  }

  std::size_t regularization = 0;
  if (auto captions = run.optional_path("captions")) {
    run.input("captions", *captions);
    std::size_t i = 0;
    for (const auto& row : read_jsonl(*captions)) {
      const auto id = row.value("id", fmt::format("reg{:06}", i++));
      try {
        emit(serialize::serialize_regularization(id, row.value("image_context", std::string{}),
                                                 require_string(row, "caption"), opts.sequence));
        ++regularization;
      } catch (const Error& e) {
        ++failures;
        run.info("caption {}: {}", id, e.what());
      }
    }
  }

  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_jsonl(out, rows);
  run.output("sequences", out);
  run.summary() = Json{{"records", records.size()},
                       {"sequences", rows.size()},
                       {"regularization", regularization},
                       {"filtered_by_aspect", filtered},
                       {"masked_tokens", masked}};
  run.info("{} sequences from {} records and {} captions", rows.size(), records.size(), regularization);
  return over_threshold(run, failures, records.size() + regularization);
}

// train-toy

condlm::SyntheticSpec synthetic_spec(const Json& j, std::uint64_t seed) {
  condlm::SyntheticSpec s;
  s.symbols = j.value("symbols", s.symbols);
  s.response_length = j.value("response_length", s.response_length);
  s.records = j.value("records", s.records);
  s.captions = j.value("captions", s.captions);
  s.seed = j.value("seed", seed);
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(fmt::format("synthetic spec: {}", e.what()));
  }
  return s;
}

int cmd_train_toy(Run& run) {
  const auto& c = run.section();
  const auto out = run.path("out", "--out");
  condlm::TrainConfig tc;
  tc.step_size = c.at("step_size").get<double>();
  tc.epochs = c.at("epochs").get<int>();
  tc.loss.alpha = c.at("alpha").get<double>();
  tc.init_scale = c.at("init_scale").get<double>();
  tc.seed = run.seed();
  try {
    tc.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(fmt::format("training config: {}", e.what()));
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());

  if (c.at("ablation").get<bool>()) {
    eval::AblationSetup setup;
    setup.task = synthetic_spec(c.at("synthetic_spec"), tc.seed);
    setup.train = tc;
    const auto configs = eval::default_ablation_configs();
    const auto rows = eval::run_ablation_matrix(configs, setup);
    write_text(out, eval::ablation_table_csv(rows));
    run.output("ablation_table", out);
    run.summary() = Json{{"rows", rows}};
    run.info("ablation table with {} rows written to {}", rows.size(), out.string());
    return kExitOk;
  }

  std::vector<serialize::TrainingSequence> corpus;
  if (c.at("synthetic").get<bool>()) {
    const auto task = condlm::make_synthetic_task(synthetic_spec(c.at("synthetic_spec"), tc.seed));
    corpus = serialize::serialize_corpus(task.records, task.captions, {});
  } else {
    const auto in = run.path("in", "--in (or --synthetic)");
    run.input("sequences", in);
    corpus = read_rows<serialize::TrainingSequence>(in, "training sequence");
  }
  condlm::FeatureSpec features;
  try {
    features = c.at("features").get<condlm::FeatureSpec>();
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("feature spec: {}", e.what()));
  }

  auto model = condlm::CondLM::build(corpus, features);
  std::vector<condlm::LossPoint> curve;
  try {
    curve = condlm::train(model, corpus, tc);
  } catch (const condlm::EmptyMask& e) {
    throw ConfigError(e.what());
  } catch (const condlm::DivergenceDetected& e) {
    run.info("training diverged: {}", e.what());
    return kExitItemFailures;
  }
  write_text(out, model.to_json().dump() + "\n");
  run.output("model", out);
  const auto curve_path = run.optional_path("curve").value_or(fs::path(out.string() + ".curve.csv"));
  write_text(curve_path, condlm::loss_curve_csv(curve));
  run.output("loss_curve", curve_path);
  run.summary() = Json{{"sequences", corpus.size()},
                       {"vocabulary", model.vocab_size()},
                       {"features", model.feature_count()},
                       {"initial_loss", curve.front().value.total},
                       {"final_loss", curve.back().value.total},
                       {"final_feedback_loss", curve.back().value.feedback},
                       {"final_regularization_loss", curve.back().value.regularization}};
  run.info("trained {} epochs on {} sequences: O {:.4f} -> {:.4f}", tc.epochs, corpus.size(),
           curve.front().value.total, curve.back().value.total);
  return kExitOk;
}

// eval

metrics::ChairVariant chair_variant(const std::string& s) {
  if (s == "original") return metrics::ChairVariant::Original;
  if (s == "paraphrased") return metrics::ChairVariant::Paraphrased;
  throw ConfigError(fmt::format("chair variant must be 'original' or 'paraphrased', got '{}'", s));
}

metrics::ObjectLexicon lexicon_from(Run& run, const Json& c) {
  const auto path = c.value("lexicon", std::string{});
  if (path.empty()) return metrics::ObjectLexicon::coco();
  run.input("lexicon", path);
  return metrics::ObjectLexicon::load(path);
}

/// The toy model answers in the serialized-sequence layout: scene, question, earlier
/// answers with their feedback, then the inference control prefix.
eval::ModelUnderTest toy_model(std::shared_ptr<const condlm::CondLM> model, std::size_t length) {
  return [model, length](const eval::ModelPrompt& p) {
    std::vector<std::string> prefix{std::string(serialize::control::kImage)};
    for (auto& t : serialize::tokenize(p.item->scene)) prefix.push_back(std::move(t));
    prefix.emplace_back(serialize::control::kQuestion);
    for (auto& t : serialize::tokenize(p.instruction)) prefix.push_back(std::move(t));
    for (const auto& h : p.history) {
      for (auto& t : serialize::tokenize(h.response)) prefix.push_back(std::move(t));
      prefix.emplace_back(serialize::control::kRefinement);
      for (auto& t : serialize::tokenize(h.feedback)) prefix.push_back(std::move(t));
    }
    for (auto& t : serialize::inference_prefix()) prefix.push_back(std::move(t));
    const auto start = prefix.size();
    const auto full = condlm::generate(*model, std::move(prefix), length);
    return serialize::detokenize(std::span(full).subspan(start));
  };
}

int cmd_eval(Run& run) {
  const auto& c = run.section();
  const auto in = run.path("in", "--in");
  const auto out = run.path("out", "--out");
  run.input("dataset", in);
  eval::EvalTask task;
  try {
    task = c.get<eval::EvalTask>();
    task.seed = run.seed();
    task.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("eval task: {}", e.what()));
  }
  std::vector<eval::EvalItem> dataset;
  try {
    dataset = eval::load_dataset(in.string());
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("{}: {}", in.string(), e.what()));
  }

  const auto lexicon = lexicon_from(run, c);
  eval::EvalOptions options;
  options.judge.model = run.model("judge");
  options.judge.parse_attempts = c.value("judge_parse_attempts", options.judge.parse_attempts);
  options.parallelism = run.parallelism();
  options.chair_variant = chair_variant(c.value("chair_variant", std::string("original")));
  options.lexicon = &lexicon;

  const auto toy = run.optional_path("toy_model");
  std::shared_ptr<gateway::ChatClient> client;
  if (task.kind != eval::TaskKind::Captioning || !toy || run.has_provider()) client = run.client();

  eval::ModelUnderTest model;
  if (toy) {
    run.input("toy_model", *toy);
    auto lm = std::make_shared<const condlm::CondLM>(condlm::CondLM::from_json(Json::parse(read_text(*toy))));
    model = toy_model(std::move(lm), c.value("toy_length", std::size_t{12}));
  } else {
    model = eval::chat_model(client, run.model("policy"), c.value("control_prefix", false));
  }

  eval::Evaluator evaluator(client, run.registry(), options);
  auto report = evaluator.run(task, dataset, model);
  if (run.manifest_path()) report.manifest = run.manifest_path()->filename().string();
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, report.to_json().dump(2) + "\n");
  run.output("report", out);
  if (!report.turn_curve.empty()) {
    const auto curve = run.optional_path("curve").value_or(fs::path(out.string() + ".curve.csv"));
    write_text(curve, report.curve_csv());
    run.output("turn_curve", curve);
  }
  for (const auto& item : report.items) {
    if (!item.valid) run.info("item {} invalid: {}", item.id, item.error);
  }
  Json summary{{"task", report.task}, {"items", report.item_count}, {"invalid", report.invalid_count},
               {"means", report.means}};
  if (report.chair) summary["chair"] = Json{{"chair_i", report.chair->chair_i}, {"chair_s", report.chair->chair_s}};
  if (report.vqa_accuracy) summary["vqa_accuracy"] = *report.vqa_accuracy;
  if (!report.turn_curve.empty()) summary["turn_curve"] = report.turn_curve;
  run.summary() = summary;
  run.info("{} items evaluated, {} invalid", report.item_count, report.invalid_count);
  return over_threshold(run, report.invalid_count, report.item_count);
}

// metrics

int cmd_metrics(Run& run) {
  const auto& c = run.section();
  const auto in = run.path("in", "--in");
  const auto out = run.path("out", "--out");
  run.input("table", in);
  const auto kind = c.value("kind", std::string("chair"));
  Json result;
  if (kind == "chair") {
    const auto lexicon = lexicon_from(run, c);
    std::vector<metrics::ChairItem> items;
    for (const auto& row : read_jsonl(in)) {
      const auto& truth = row.contains("annotated") ? row.at("annotated") : row.at("objects");
      items.push_back({require_string(row, "caption"), truth.get<std::set<std::string>>()});
    }
    const auto r = metrics::chair(items, lexicon, chair_variant(c.value("chair_variant", std::string("original"))));
    result = r;
    result["n"] = items.size();
    run.info("CHAIR_i {:.4f}, CHAIR_s {:.4f} over {} captions", r.chair_i, r.chair_s, items.size());
  } else if (kind == "agreement") {
    std::vector<metrics::AgreementRow> rows;
    for (const auto& row : read_jsonl(in)) {
      rows.push_back({row.value("id", std::string{}), row.at("judge").get<double>(), row.at("human").get<double>()});
    }
    const auto r = metrics::analyze_agreement(rows);
    result = r;
    run.info("Spearman {:.4f} over {} pairs", r.spearman, r.n);
  } else {
    throw ConfigError(fmt::format("metrics kind must be 'chair' or 'agreement', got '{}'", kind));
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, result.dump(2) + "\n");
  run.output("result", out);
  run.summary() = result;
  run.summary().erase("per_caption");
  return kExitOk;
}

// report

std::string fmt_number(const Json& v) {
  if (v.is_number_float()) return fmt::format("{:.2f}", v.get<double>());
  return v.dump();
}

std::string render_report(const std::string& name, const Json& j) {
  std::string md = fmt::format("## {}\n\n", name);
  if (j.contains("task")) {
    md += fmt::format("Task `{}`: {} items, {} invalid.\n\n", j.at("task").get<std::string>(),
                      j.value("item_count", 0), j.value("invalid_count", 0));
    if (j.contains("means") && !j.at("means").empty()) {
      md += "| score | mean (0-100) | raw mean |\n|---|---|---|\n";
      for (const auto& [k, v] : j.at("means").items()) {
        md += fmt::format("| {} | {} | {} |\n", k, fmt_number(v), fmt_number(j.at("raw_means").value(k, Json(nullptr))));
      }
      md += "\n";
    }
    if (j.contains("chair")) {
      md += fmt::format("CHAIR_i {:.4f}, CHAIR_s {:.4f}\n\n", j.at("chair").at("chair_i").get<double>(),
                        j.at("chair").at("chair_s").get<double>());
    }
    if (j.contains("binary_percent") && !j.at("binary_percent").empty()) {
      md += "| criterion | % yes |\n|---|---|\n";
      for (const auto& [k, v] : j.at("binary_percent").items()) md += fmt::format("| {} | {} |\n", k, fmt_number(v));
      md += "\n";
    }
    if (j.contains("vqa_accuracy")) md += fmt::format("VQA accuracy {:.2f}%\n\n", j.at("vqa_accuracy").get<double>());
    if (j.contains("turn_curve")) {
      md += "| turn | score |\n|---|---|\n";
      const auto& curve = j.at("turn_curve");
      for (std::size_t t = 0; t < curve.size(); ++t) md += fmt::format("| {} | {} |\n", t + 1, fmt_number(curve[t]));
      md += "\n";
    }
    return md;
  }
  if (j.contains("command")) {
    md += fmt::format("Run of `{}` exited with {}.\n\n```json\n{}\n```\n\n", j.at("command").get<std::string>(),
                      j.at("exit_code").get<int>(), j.value("summary", Json::object()).dump(2));
    return md;
  }
  md += fmt::format("```json\n{}\n```\n\n", j.dump(2));
  return md;
}

int cmd_report(Run& run) {
  const auto& c = run.section();
  const auto out = run.path("out", "--out");
  const auto inputs = c.value("inputs", std::vector<std::string>{});
  if (inputs.empty()) throw ConfigError("'report' needs at least one --in");
  std::string md = "# Run report\n\n";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const fs::path p = inputs[i];
    run.input(fmt::format("input{}", i), p);
    Json j;
    try {
      j = Json::parse(read_text(p));
    } catch (const Json::exception& e) {
      throw ConfigError(fmt::format("{} is not JSON: {}", p.string(), e.what()));
    }
    md += render_report(p.filename().string(), j);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, md);
  run.output("report", out);
  run.summary() = Json{{"inputs", inputs.size()}};
  return kExitOk;
}

// curate-serve

int cmd_curate_serve(Run& run) {
  const auto& c = run.section();
  curate::ServiceOptions options;
  options.audit_log = run.path("audit", "--audit");
  options.default_page_size = c.at("default_page_size").get<std::size_t>();
  options.max_page_size = c.at("max_page_size").get<std::size_t>();
  const auto token_env = c.at("token_env").get<std::string>();
  if (const char* token = std::getenv(token_env.c_str()); token && *token) {
    options.bearer_token = token;
  } else if (!c.at("no_auth").get<bool>()) {
    throw ConfigError(fmt::format("set {} to the shared bearer token, or pass --no-auth", token_env));
  }

  dataset::JudgeClassifier classifier;
  if (run.has_provider()) classifier = dataset::make_judge_classifier(run.client(), run.registry(), run.model("judge"));
  curate::CurationService service(options, classifier);

  if (auto candidates = run.optional_path("candidates")) {
    run.input("candidates", *candidates);
    const auto rows = read_rows<dataset::Candidate>(*candidates, "candidate");
    std::map<std::string, dataset::FailurePredicate> tags;
    if (auto tag_file = run.optional_path("tags")) {
      run.input("tags", *tag_file);
      try {
        tags = Json::parse(read_text(*tag_file)).get<std::map<std::string, dataset::FailurePredicate>>();
        for (const auto& [_, p] : tags) p.validate();
      } catch (const std::exception& e) {
        throw ConfigError(fmt::format("tags {}: {}", tag_file->string(), e.what()));
      }
    }
    if (service.seed(rows, tags)) {
      run.info("opened round 1 with {} candidates", rows.size());
    } else {
      run.info("audit log already holds rounds; ignoring --candidates");
    }
  }
  const auto snapshot = service.snapshot();
  run.summary() = Json{{"rounds", service.list_rounds().body.at("rounds")}};
  if (auto snap = run.optional_path("snapshot")) {
    write_text(*snap, snapshot.dump(2) + "\n");
    run.output("snapshot", *snap);
  }
  if (c.at("dry_run").get<bool>()) return kExitOk;

  run.write_manifest(kExitOk);
  httplib::Server server;
  service.mount(server);
  const auto host = c.at("host").get<std::string>();
  const int port = c.at("port").get<int>();
  run.info("serving on http://{}:{}", host, port);
  if (!server.listen(host, port)) throw ConfigError(fmt::format("could not listen on {}:{}", host, port));
  return kExitOk;
}

struct Subcommand {
  std::string name;
  std::function<int(Run&)> body;
  std::function<fs::path(const Json&)> default_manifest;
};

void add_common(CLI::App* app, Flags& flags, std::string& config_path, std::string& manifest) {
  app->add_option("--config", config_path, "JSON config file; flags override it");
  app->add_option("--manifest", manifest, "where to write the run manifest");
  flags.option<std::string>(app, "--provider", "/provider", "provider profile name (fixtures, remote, ...)");
  flags.option<std::string>(app, "--fixtures", "/profiles/fixtures/archive", "fixture archive for the fixtures profile");
  flags.option<std::uint64_t>(app, "--seed", "/seed", "seed for everything stochastic");
  flags.option<int>(app, "--parallelism", "/parallelism", "worker threads");
  flags.option<double>(app, "--max-failure-rate", "/max_failure_rate", "fraction of failed items tolerated");
  flags.option<std::string>(app, "--templates", "/templates", "prompt template directory");
  flags.option<std::string>(app, "--policy-model", "/models/policy", "model id of the policy");
  flags.option<std::string>(app, "--judge-model", "/models/judge", "model id of the judge");
}

fs::path sibling_manifest(const Json& section, const std::string& key) {
  const auto p = section.value(key, std::string{});
  if (p.empty()) return {};
  return fs::path(p + ".manifest.json");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log, const ProviderKinds& extra_kinds) {
  CLI::App app{"Feedback annotation, training-data and evaluation toolkit", "nlf"};
  app.require_subcommand(1, 1);
  Flags flags;
  std::string config_path;
  std::string manifest;

  std::vector<Subcommand> subs;
  auto add = [&](const std::string& name, const std::string& help, std::function<int(Run&)> body,
                 std::function<fs::path(const Json&)> default_manifest) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, flags, config_path, manifest);
    subs.push_back({name, std::move(body), std::move(default_manifest)});
    return sub;
  };

  auto* split = add("split", "partition raw samples into SFT and feedback sets", cmd_split,
                    [](const Json& c) {
                      const auto dir = c.at("split").value("out_dir", std::string{});
                      return dir.empty() ? fs::path{} : fs::path(dir) / "split.manifest.json";
                    });
  flags.option<std::string>(split, "--in", "/split/in", "raw samples (JSONL)");
  flags.option<std::string>(split, "--out-dir", "/split/out_dir", "directory for sft.jsonl and feedback.jsonl");
  flags.pairs(split, "--target", "/split/rules/target_counts", "feedback target per data type, e.g. conversation=100");
  flags.flag(split, "--visual-filter", "/split/rules/require_visual_dependence", "keep only image-dependent questions in the feedback set");
  flags.option<std::size_t>(split, "--freeze-train", "/split/freeze/train", "freeze mode: train size");
  flags.option<std::size_t>(split, "--freeze-test", "/split/freeze/test", "freeze mode: test size");

  auto* annotate = add("annotate", "run the generate-and-judge loop over feedback samples", cmd_annotate,
                       [](const Json& c) { return sibling_manifest(c.at("annotate"), "out"); });
  flags.option<std::string>(annotate, "--in", "/annotate/in", "feedback samples (JSONL)");
  flags.option<std::string>(annotate, "--out", "/annotate/out", "annotated records (JSONL)");
  flags.option<std::string>(annotate, "--checkpoint", "/annotate/checkpoint", "checkpoint file (default <out>.checkpoint.jsonl)");
  flags.option<int>(annotate, "--max-turns", "/annotate/max_turns", "turn cap including the ground truth");

  auto* serialize = add("serialize", "turn records into masked training sequences", cmd_serialize,
                        [](const Json& c) { return sibling_manifest(c.at("serialize"), "out"); });
  flags.option<std::string>(serialize, "--in", "/serialize/in", "annotated records (JSONL)");
  flags.option<std::string>(serialize, "--captions", "/serialize/captions", "regularization captions (JSONL)");
  flags.option<std::string>(serialize, "--out", "/serialize/out", "training sequences (JSONL)");
  flags.option<bool>(serialize, "--critique", "/serialize/critique_on", "include critique tokens");
  flags.option<bool>(serialize, "--refinement", "/serialize/refinement_on", "include refinement feedback");
  flags.option<bool>(serialize, "--rlaif", "/serialize/rlaif_on", "keep generated turns (off: ground truth only)");
  flags.option<std::vector<std::string>>(serialize, "--aspect", "/serialize/aspects", "keep only these aspects");
  flags.flag(serialize, "--per-turn", "/serialize/per_turn", "one sequence per turn");
  flags.option<std::size_t>(serialize, "--max-length", "/serialize/max_length", "reject longer sequences (0: no limit)");

  auto* train = add("train-toy", "train the toy conditional model", cmd_train_toy,
                    [](const Json& c) { return sibling_manifest(c.at("train"), "out"); });
  flags.option<std::string>(train, "--in", "/train/in", "training sequences (JSONL)");
  flags.option<std::string>(train, "--out", "/train/out", "model checkpoint (JSON), or the table with --ablation");
  flags.option<std::string>(train, "--curve", "/train/curve", "loss curve CSV (default <out>.curve.csv)");
  flags.option<int>(train, "--epochs", "/train/epochs", "gradient steps");
  flags.option<double>(train, "--step-size", "/train/step_size", "learning rate");
  flags.option<double>(train, "--alpha", "/train/alpha", "regularization weight");
  flags.option<double>(train, "--init-scale", "/train/init_scale", "stddev of random initial weights");
  flags.flag(train, "--synthetic", "/train/synthetic", "train on the built-in two-distribution corpus");
  flags.flag(train, "--ablation", "/train/ablation", "run the component ablation matrix");

  auto* evalc = add("eval", "evaluate a model with the judge-based benchmarks", cmd_eval,
                    [](const Json& c) { return sibling_manifest(c.at("eval"), "out"); });
  flags.option<std::string>(evalc, "--task", "/eval/task", "llava_eval | llava_bench | captioning | vlsafe | vqa | multiturn");
  flags.option<std::string>(evalc, "--in", "/eval/in", "evaluation items (JSONL)");
  flags.option<std::string>(evalc, "--out", "/eval/out", "report (JSON)");
  flags.option<std::string>(evalc, "--curve", "/eval/curve", "multi-turn curve CSV (default <out>.curve.csv)");
  flags.option<std::string>(evalc, "--category", "/eval/category", "llava_eval category");
  flags.option<int>(evalc, "--instruction", "/eval/instruction_id", "captioning instruction 1 or 2");
  flags.option<std::string>(evalc, "--dataset-tag", "/eval/dataset_tag", "VQA dataset tag");
  flags.option<std::size_t>(evalc, "--sample-n", "/eval/sample_n", "VQA sample size");
  flags.option<int>(evalc, "--max-turns", "/eval/max_turns", "multi-turn cap");
  flags.option<std::vector<std::string>>(evalc, "--feedback-provider", "/eval/providers", "multi-turn feedback model ids");
  flags.option<std::string>(evalc, "--chair-variant", "/eval/chair_variant", "original | paraphrased");
  flags.option<std::string>(evalc, "--lexicon", "/eval/lexicon", "object lexicon JSON (default: COCO)");
  flags.flag(evalc, "--control-prefix", "/eval/control_prefix", "prepend the inference control prefix");
  flags.option<std::string>(evalc, "--toy-model", "/eval/toy_model", "answer with a trained toy model checkpoint");
  flags.option<std::size_t>(evalc, "--toy-length", "/eval/toy_length", "tokens the toy model generates");

  auto* metricsc = add("metrics", "compute CHAIR or judge/human agreement from a table", cmd_metrics,
                       [](const Json& c) { return sibling_manifest(c.at("metrics"), "out"); });
  flags.option<std::string>(metricsc, "--kind", "/metrics/kind", "chair | agreement");
  flags.option<std::string>(metricsc, "--in", "/metrics/in", "input table (JSONL)");
  flags.option<std::string>(metricsc, "--out", "/metrics/out", "result (JSON)");
  flags.option<std::string>(metricsc, "--lexicon", "/metrics/lexicon", "object lexicon JSON (default: COCO)");
  flags.option<std::string>(metricsc, "--chair-variant", "/metrics/chair_variant", "original | paraphrased");

  auto* report = add("report", "render reports and manifests as Markdown", cmd_report,
                     [](const Json& c) { return sibling_manifest(c.at("report"), "out"); });
  flags.option<std::vector<std::string>>(report, "--in", "/report/inputs", "report or manifest JSON files");
  flags.option<std::string>(report, "--out", "/report/out", "Markdown output");

  auto* serve = add("curate-serve", "serve the curation API over HTTP", cmd_curate_serve,
                    [](const Json& c) { return sibling_manifest(c.at("curate"), "audit"); });
  flags.option<std::string>(serve, "--audit", "/curate/audit", "audit log (JSONL); replayed on start");
  flags.option<std::string>(serve, "--candidates", "/curate/candidates", "candidates to open round 1 with (JSONL)");
  flags.option<std::string>(serve, "--tags", "/curate/tags", "initial failure-mode tags (JSON object)");
  flags.option<std::string>(serve, "--host", "/curate/host", "bind address");
  flags.option<int>(serve, "--port", "/curate/port", "port");
  flags.option<std::string>(serve, "--snapshot", "/curate/snapshot", "write the replayed state here");
  flags.flag(serve, "--no-auth", "/curate/no_auth", "serve without a bearer token");
  flags.flag(serve, "--dry-run", "/curate/dry_run", "replay and seed, then exit without serving");

  std::vector<std::string> argv_store{"nlf"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  std::unique_ptr<Run> current;
  try {
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      log << "error: " << e.what() << '\n';
      return kExitConfig;
    }
    const auto* chosen = app.get_subcommands().front();
    const auto& sub = *std::find_if(subs.begin(), subs.end(), [&](const Subcommand& s) { return s.name == chosen->get_name(); });

    Json config = defaults();
    if (!config_path.empty()) {
      Json file;
      try {
        file = Json::parse(read_text(config_path));
      } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config {}: {}", config_path, e.what()));
      }
      if (!file.is_object()) throw ConfigError(fmt::format("config {} must be a JSON object", config_path));
      config.merge_patch(file);
    }
    config.merge_patch(flags.patch());

    current = std::make_unique<Run>(sub.name, config, log, extra_kinds);
    fs::path manifest_path = manifest.empty() ? sub.default_manifest(config) : fs::path(manifest);
    if (!manifest_path.empty()) current->set_manifest_path(manifest_path);
    current->max_failure_rate();
    current->parallelism();
    const int code = sub.body(*current);
    current->write_manifest(code);
    return code;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    if (current) current->write_manifest(kExitConfig, e.what());
    return kExitConfig;
  } catch (const gateway::AuthError& e) {
    log << "AuthError: " << e.what() << '\n';
    if (current) current->write_manifest(kExitConfig, std::string("AuthError: ") + e.what());
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    log << "error: " << e.what() << '\n';
    if (current) current->write_manifest(kExitConfig, e.what());
    return kExitConfig;
  } catch (const Json::exception& e) {
    log << "error: bad configuration value: " << e.what() << '\n';
    if (current) current->write_manifest(kExitConfig, e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    if (current) current->write_manifest(kExitItemFailures, e.what());
    return kExitItemFailures;
  }
}

}  // namespace nlf::cli
