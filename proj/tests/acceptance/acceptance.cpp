// Acceptance checks: one PASS/FAIL line per criterion, with the measured value and the
// tolerance it was held to. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "contract.hpp"
#include "generators.hpp"
#include "nlf/annotate/engine.hpp"
#include "nlf/condlm/model.hpp"
#include "nlf/condlm/synthetic.hpp"
#include "nlf/curate/service.hpp"
#include "nlf/dataset/splits.hpp"
#include "nlf/eval/harness.hpp"
#include "nlf/metrics/metrics.hpp"
#include "nlf/serialize/sequence.hpp"
#include "pipeline.hpp"

using namespace nlf;
using serialize::SampleKind;
using serialize::TrainingSequence;
using Tokens = std::vector<std::string>;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, std::string note) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "!") + std::move(note));
  }
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "nlf_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Objective mechanics

std::vector<TrainingSequence> tiny_corpus(Rng& rng) {
  const Tokens words = {"a", "b", "c", "d", "<bad>", "<excellent>", "[x]", "[y]"};
  std::vector<TrainingSequence> out;
  const auto n = 2 + rng.below(4);
  for (std::uint64_t i = 0; i < n + 2; ++i) {
    TrainingSequence s;
    s.record_id = "s" + std::to_string(i);
    // The last two are one of each kind, so both pooled means are defined.
    s.sample_kind = i == n ? SampleKind::Feedback
                    : i == n + 1 ? SampleKind::Regularization
                    : (rng.below(3) == 0 ? SampleKind::Regularization : SampleKind::Feedback);
    const auto len = 3 + rng.below(6);
    for (std::uint64_t k = 0; k < len; ++k) {
      const auto& w = words[rng.below(words.size())];
      s.tokens.push_back(w);
      s.loss_mask.push_back(!serialize::is_control(w) && rng.below(2) == 0);
    }
    s.tokens.push_back("a");
    s.loss_mask.push_back(true);
    out.push_back(std::move(s));
  }
  return out;
}

// Pooled token-mean NLL per kind, computed from next-token distributions only.
std::pair<double, double> oracle_objective(const condlm::CondLM& m, const std::vector<TrainingSequence>& corpus) {
  double sum[2] = {0, 0};
  double count[2] = {0, 0};
  for (const auto& s : corpus) {
    const int k = s.sample_kind == SampleKind::Feedback ? 0 : 1;
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      if (!s.loss_mask[t]) continue;
      const auto p = m.distribution(std::span<const std::string>(s.tokens).first(t));
      sum[k] -= std::log(p[m.token_index(s.tokens[t])]);
      count[k] += 1;
    }
  }
  return {sum[0] / count[0], sum[1] / count[1]};
}

Outcome objective_gradient() {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  Rng rng(20240);
  const double h = 1e-5;
  double fd_worst = 0.0;
  double identity_worst = 0.0;
  double oracle_worst = 0.0;
  const int instances = 24;
  for (int instance = 0; instance < instances; ++instance) {
    const auto corpus = tiny_corpus(rng);
    auto m = condlm::CondLM::build(corpus);
    for (double& w : m.weights()) w = rng.normal();
    const double alpha = 4.0 * rng.uniform();
    const auto batch = condlm::compile(m, corpus);
    const auto g = condlm::gradient(m, batch, alpha);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double keep = m.weights()[i];
      m.weights()[i] = keep + h;
      const double up = condlm::loss(m, batch, alpha).total;
      m.weights()[i] = keep - h;
      const double down = condlm::loss(m, batch, alpha).total;
      m.weights()[i] = keep;
      const double fd = (up - down) / (2 * h);
      fd_worst = std::max(fd_worst, std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-6}));
    }
    const auto [of, orr] = oracle_objective(m, corpus);
    for (double a : {0.0, 0.5, 1.0, 4.0}) {
      const auto l = condlm::loss(m, batch, a);
      identity_worst = std::max(identity_worst, std::abs(l.total - (l.feedback + a * l.regularization)));
      oracle_worst = std::max({oracle_worst, std::abs(l.feedback - of), std::abs(l.regularization - orr),
                               std::abs(l.total - (of + a * orr))});
    }
  }
  o.require(fd_worst < 1e-4, fmt::format("fd_rel_err={:.2e}<1e-4 over {} instances", fd_worst, instances));
  o.require(identity_worst < 1e-12, fmt::format("O-(O_f+aO_r)={:.1e}<1e-12", identity_worst));
  o.require(oracle_worst < 1e-12, fmt::format("vs_oracle={:.1e}<1e-12", oracle_worst));

  // Masked-off positions: changing an unmasked token outside every masked window, or a
  // feature seen only before unmasked tokens, must leave the gradient untouched.
  std::vector<TrainingSequence> c{TrainingSequence{"s", {"a", "z", "b", "c", "d"}, {false, false, false, false, true},
                                                   SampleKind::Feedback, 1}};
  auto m = condlm::CondLM::build(c);
  for (double& w : m.weights()) w = rng.normal();
  const auto base = condlm::gradient(m, condlm::compile(m, c), 1.0);
  c[0].tokens[1] = "a";
  const bool swap_same = condlm::gradient(m, condlm::compile(m, c), 1.0) == base;
  c = {TrainingSequence{"s", {"a", "b", "c"}, {false, false, true}, SampleKind::Feedback, 1}};
  condlm::CondLM m2({"<unk>", "a", "b", "c"}, {"bias", "p1=a", "p1=b"}, condlm::FeatureSpec{1, false, false});
  for (double& w : m2.weights()) w = rng.normal();
  const auto g2 = condlm::gradient(m2, condlm::compile(m2, c), 1.0);
  bool zero_row = true;
  for (std::size_t v = 0; v < m2.vocab_size(); ++v) zero_row = zero_row && g2[m2.vocab_size() + v] == 0.0;
  o.require(swap_same && zero_row, fmt::format("masked_off_grad_zero={}", swap_same && zero_row ? "yes" : "no"));

  const double secs = seconds_since(start);
  o.require(secs < 10.0, fmt::format("runtime={:.2f}s<10s", secs));
  return o;
}

// Conditioning and regularization on the synthetic corpus

struct Trained {
  condlm::SyntheticTask task;
  condlm::CondLM model;
  double kl_before = 0.0;
};

Trained train_synthetic(double alpha) {
  auto task = condlm::make_synthetic_task({});
  const auto corpus = serialize::serialize_corpus(task.records, task.captions, {});
  auto model = condlm::CondLM::build(corpus);
  const auto ctx = task.probe_context();
  const double before =
      condlm::conditioning_kl(model, ctx, serialize::inference_prefix(), condlm::SyntheticTask::bad_prefix(), {})[0];
  condlm::TrainConfig cfg;
  cfg.step_size = 2.0;
  cfg.epochs = 150;
  cfg.loss.alpha = alpha;
  condlm::train(model, corpus, cfg);
  return {std::move(task), std::move(model), before};
}

Outcome conditioning_effect() {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  const auto t = train_synthetic(1.0);
  const auto ctx = t.task.probe_context();
  const auto good_prefix = serialize::inference_prefix();
  const auto bad_prefix = condlm::SyntheticTask::bad_prefix();
  const double after = condlm::conditioning_kl(t.model, ctx, good_prefix, bad_prefix, {})[0];
  o.require(t.kl_before == 0.0, fmt::format("KL_before={:.3g}==0", t.kl_before));
  o.require(after > 1.0, fmt::format("KL_after={:.3f}>1.0nat", after));
  auto score = [&](const Tokens& prefix) {
    auto p = ctx;
    p.insert(p.end(), prefix.begin(), prefix.end());
    const auto out = condlm::generate(t.model, p, condlm::SyntheticSpec{}.response_length);
    return t.task.good.mean_log_prob(std::span<const std::string>(out).subspan(p.size()));
  };
  const double good = score(good_prefix);
  const double bad = score(bad_prefix);
  o.require(good > bad, fmt::format("logP_good(excellent-prefixed)={:.3f}>logP_good(bad-prefixed)={:.3f}", good, bad));
  const double secs = seconds_since(start);
  o.require(secs < 60.0, fmt::format("runtime={:.2f}s<60s", secs));
  return o;
}

Outcome regularization_ablation() {
  Outcome o;
  condlm::SyntheticSpec held;
  held.seed = 4321;
  held.records = 1;
  held.captions = 80;
  const auto held_task = condlm::make_synthetic_task(held);
  std::vector<TrainingSequence> held_out;
  for (std::size_t i = 0; i < held_task.captions.size(); ++i) {
    held_out.push_back(serialize::serialize_regularization("h" + std::to_string(i), held_task.captions[i].image_context,
                                                           held_task.captions[i].caption));
  }
  const double off = condlm::loss(train_synthetic(0.0).model, held_out, 1.0).regularization;
  const double on = condlm::loss(train_synthetic(1.0).model, held_out, 1.0).regularization;
  o.require(off > on, fmt::format("held_out_O_r(alpha=0)={:.4f}>held_out_O_r(alpha=1)={:.4f}", off, on));
  return o;
}

// Turn state machine

class DraftGenerator final : public annotate::ResponseGenerator {
 public:
  std::string generate(const annotate::Sample&, std::span<const InteractionTurn> prior) override {
    return fmt::format("draft {}", prior.size() + 1);
  }
};

class ScriptedJudge final : public annotate::TurnAnnotator {
 public:
  explicit ScriptedJudge(std::vector<int> ratings) : ratings_(std::move(ratings)) {}
  annotate::TurnAnnotation annotate_turn(const annotate::Sample&, std::string_view response, Aspect) override {
    const int r = ratings_.at(calls++);
    return {InteractionTurn{std::string(response), Rating(r), "a reason", "a short critique here",
                            fmt::format("improve {}", response)},
            1, ""};
  }
  std::size_t calls = 0;

 private:
  std::vector<int> ratings_;
};

Outcome turn_state_machine() {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  const annotate::Sample sample{"x", Aspect::Helpfulness, "img.jpg", "a dog", "What is the dog doing?",
                                "The dog is running."};
  // Continue sets by turn: 1 -> {1,2}, 2 -> {2,3}, 3 -> {1,2,3}; a turn that does not beat
  // its predecessor fails the trajectory; three generated turns leave room only for the
  // ground truth.
  const std::map<int, std::set<int>> thresholds = {{1, {1, 2}}, {2, {2, 3}}, {3, {1, 2, 3}}};
  int scripts = 0;
  int bad = 0;
  int failed_kept = 0;
  for (int a = 1; a <= 4; ++a) {
    for (int b = 1; b <= 4; ++b) {
      for (int c = 1; c <= 4; ++c) {
        const std::vector<int> script = {a, b, c};
        std::size_t want = 1;
        bool failed = false;
        while (want < 3 && thresholds.at(static_cast<int>(want)).contains(script[want - 1])) {
          ++want;
          if (script[want - 1] <= script[want - 2]) {
            failed = true;
            break;
          }
        }
        DraftGenerator gen;
        ScriptedJudge judge(script);
        const auto r = annotate::run_trajectory(sample, annotate::TurnPolicy{}, gen, judge);
        bool ok = r.status == annotate::TrajectoryStatus::Completed && r.record && r.generated.size() == want &&
                  r.record->turns.size() == want + 1 && r.record->turns.size() <= 4 &&
                  r.record->turns.back().response == sample.ground_truth &&
                  r.record->turns.back().rating == Rating(4) && validate_record(*r.record).empty();
        if (ok && failed) {
          ok = *r.outcome == annotate::TrajectoryOutcome::FailedInteraction;
          failed_kept += ok ? 1 : 0;
        }
        bad += ok ? 0 : 1;
        ++scripts;
      }
    }
  }
  o.require(scripts == 64 && bad == 0, fmt::format("scripts={} mismatches={}", scripts, bad));
  o.require(failed_kept > 0, fmt::format("failed_trajectories_kept={}", failed_kept));
  const double secs = seconds_since(start);
  o.require(secs < 1.0, fmt::format("runtime={:.3f}s<1s", secs));
  return o;
}

// Serialization contract

Outcome serialization_contract() {
  Outcome o;
  Rng rng(1000);
  std::size_t violations = 0;
  std::size_t multi = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto record = testing::random_record(rng, fmt::format("r{:04}", i));
    multi += record.turns.size() > 1 ? 1 : 0;
    violations += testing::check_serialization_contract(record, serialize::serialize(record)).size();
  }
  o.require(violations == 0, fmt::format("records=1000 multi_turn={} violations={}", multi, violations));
  return o;
}

// CHAIR

Outcome chair_oracle() {
  Outcome o;
  metrics::ObjectLexicon lex;
  lex.add("dog", {"puppy"});
  lex.add("cat", {"kitten"});
  lex.add("tree", {});
  lex.add("frisbee", {});
  const std::vector<metrics::ChairItem> items = {{"A dog catches a frisbee under a tree.", {"dog", "tree"}},
                                                 {"A cat.", {"cat"}}};
  const auto r = metrics::chair(items, lex);
  o.require(r.chair_i == 0.25 && r.chair_s == 0.5, fmt::format("chair_i={} chair_s={} (exact 0.25/0.5)", r.chair_i, r.chair_s));
  const std::vector<metrics::ChairItem> clean = {{"A dog.", {"dog"}}, {"A puppy by a tree", {"dog", "tree"}}};
  const auto c = metrics::chair(clean, lex);
  o.require(c.chair_i == 0.0 && c.chair_s == 0.0, fmt::format("clean=({},{})", c.chair_i, c.chair_s));

  // The hand-labeled fixture: expected objects are listed per caption, so CHAIR follows by counting.
  const fs::path dir = NLF_FIXTURE_DIR;
  const auto fixture_lex = metrics::ObjectLexicon::load((dir / "chair/lexicon.json").string());
  std::vector<metrics::ChairItem> fixture;
  std::size_t mentioned = 0;
  std::size_t hallucinated = 0;
  std::size_t bad_captions = 0;
  for (const auto& row : read_jsonl(dir / "chair/captions.jsonl")) {
    const auto expected = row.at("expected_objects").get<std::set<std::string>>();
    const auto truth = row.at("annotated").get<std::set<std::string>>();
    fixture.push_back({row.at("caption").get<std::string>(), truth});
    std::size_t h = 0;
    for (const auto& e : expected) h += truth.contains(e) ? 0 : 1;
    mentioned += expected.size();
    hallucinated += h;
    bad_captions += h > 0 ? 1 : 0;
  }
  const auto f = metrics::chair(fixture, fixture_lex);
  const double want_i = static_cast<double>(hallucinated) / static_cast<double>(mentioned);
  const double want_s = static_cast<double>(bad_captions) / static_cast<double>(fixture.size());
  o.require(std::abs(f.chair_i - want_i) < 1e-12 && std::abs(f.chair_s - want_s) < 1e-12,
            fmt::format("fixture{} chair_i={:.4f} chair_s={:.4f} (counted by hand)", fixture.size(), f.chair_i, f.chair_s));
  return o;
}

// Spearman

double rank_formula(const std::vector<double>& x, const std::vector<double>& y) {
  // No ties: 1 - 6 sum d^2 / (n (n^2 - 1)).
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k + 1);
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  const double n = static_cast<double>(x.size());
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

Outcome spearman_oracle() {
  Outcome o;
  const std::vector<std::pair<std::vector<double>, std::vector<double>>> fixed = {
      {{1, 2, 3, 4}, {2, 1, 4, 3}}, {{1, 2, 3}, {10, 20, 30}}, {{1, 2, 3}, {3, 2, 1}}, {{0.3, 9, -2, 4, 7}, {1, 5, 0, 3, 2}}};
  const std::vector<double> hand = {0.6, 1.0, -1.0, 0.9};
  double worst = 0.0;
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    const double s = metrics::spearman(fixed[i].first, fixed[i].second);
    worst = std::max({worst, std::abs(s - hand[i]), std::abs(s - rank_formula(fixed[i].first, fixed[i].second))});
  }
  o.require(worst < 1e-12, fmt::format("fixed_cases(0.6,+1,-1,0.9) err={:.1e}<1e-12", worst));

  Rng rng(2024);
  const auto pairs = testing::planted_rank_pairs(rng, 5000, 0.93);
  std::vector<metrics::AgreementRow> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) rows.push_back({std::to_string(i), pairs[i].first, pairs[i].second});
  const auto report = metrics::analyze_agreement(rows);
  o.require(std::abs(report.spearman - 0.93) < 0.02,
            fmt::format("planted=0.93 recovered={:.4f} |diff|<0.02 n={}", report.spearman, report.n));
  return o;
}

// Multi-turn harness

std::shared_ptr<gateway::ChatClient> scripted_client(std::function<std::string(const std::string&)> fn) {
  gateway::ProviderConfig cfg;
  cfg.max_concurrency = 16;
  cfg.requests_per_minute = 1'000'000;
  return std::make_shared<gateway::ChatClient>(
      cfg,
      std::make_shared<gateway::ScriptedProvider>(
          [fn = std::move(fn)](const gateway::ChatRequest& r, int) { return fn(r.messages.back().content); }),
      std::make_shared<gateway::ManualClock>());
}

Outcome multiturn_harness() {
  Outcome o;
  std::vector<eval::EvalItem> items;
  const std::vector<std::string> cats = {"conversation", "description", "reasoning"};
  for (int i = 0; i < 6; ++i) {
    items.push_back({fmt::format("q{}", i), fmt::format("What is in picture {}?", i), "a scene",
                     "A dog on a beach.", cats[i % 3], std::nullopt, std::nullopt});
  }
  // Judge scores draft k as 2k + 2 on the 0-10 scale.
  auto client = scripted_client([](const std::string& p) -> std::string {
    if (p.find("actionable suggestion") != std::string::npos) return "Add more detail.";
    for (int k = 1; k <= 4; ++k) {
      if (p.find(fmt::format("Response: draft{}\n", k)) != std::string::npos) return fmt::format("{{\"score\": {}}}", 2 * k + 2);
    }
    return "{\"score\": 0}";
  });
  const auto registry = prompts::PromptRegistry::builtin();
  eval::Evaluator ev(client, registry, {});
  eval::EvalTask mt;
  mt.kind = eval::TaskKind::MultiTurn;
  mt.providers = {"provider_a", "provider_b"};
  const eval::ModelUnderTest improving = [](const eval::ModelPrompt& p) { return fmt::format("draft{}", p.history.size() + 1); };
  const eval::ModelUnderTest stat = [](const eval::ModelPrompt&) { return std::string("draft2"); };

  const auto up = ev.run(mt, items, improving).turn_curve;
  bool increasing = up.size() == 4;
  for (std::size_t t = 1; t < up.size(); ++t) increasing = increasing && up[t] > up[t - 1];
  o.require(increasing, fmt::format("improving=[{:.1f}]", fmt::join(up, ",")));

  const auto flat = ev.run(mt, items, stat).turn_curve;
  bool is_flat = flat.size() == 4;
  for (double v : flat) is_flat = is_flat && v == flat.front();
  o.require(is_flat, fmt::format("static=[{:.1f}]", fmt::join(flat, ",")));

  const auto single = ev.run(eval::EvalTask{}, items, improving).means.at("overall");
  o.require(std::abs(up.front() - single) < 1e-9, fmt::format("turn1={:.4f}==single_turn_mean={:.4f}", up.front(), single));
  return o;
}

// Whole-pipeline determinism

Outcome pipeline_determinism() {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  const auto root = scratch("pipeline");
  const auto archive = root / "archive.jsonl";
  const auto corpus = testing::pipeline_corpus(42);

  testing::Pipeline live(corpus, root / "live", "record", archive, 1);
  live.prepare();
  for (int code : live.run_all()) {
    if (code != 0) throw std::runtime_error("recording run failed:\n" + live.log());
  }
  const auto reference = live.outputs();
  std::size_t bytes = 0;
  for (const auto& [_, text] : reference) bytes += text.size();

  auto compare = [&](const std::string& label, const std::map<std::string, std::string>& got) {
    std::vector<std::string> diff;
    for (const auto& [file, text] : reference) {
      if (got.at(file) != text) diff.push_back(file);
    }
    o.require(diff.empty(), diff.empty() ? label + "=identical" : fmt::format("{} differs in {}", label, fmt::join(diff, ",")));
  };

  auto replay = [&](const std::string& name, int parallelism) {
    testing::Pipeline p(corpus, root / name, "fixtures", archive, parallelism);
    p.prepare();
    for (int code : p.run_all()) {
      if (code != 0) throw std::runtime_error(name + " failed:\n" + p.log());
    }
    return p.outputs();
  };
  compare("fixtures_p1", replay("p1", 1));
  compare("rerun_p1", replay("p1", 1));
  compare("fixtures_p8", replay("p8", 8));

  // Restart: annotate is cut short by truncating its checkpoint mid-record, then rerun.
  testing::Pipeline r(corpus, root / "restart", "fixtures", archive, 8);
  r.prepare();
  bool ok = r.step("split") == 0 && r.step("annotate") == 0;
  const auto ckpt = r.dir() / "records.jsonl.checkpoint.jsonl";
  const auto text = read_text(ckpt);
  std::size_t cut = 0;
  for (int n = 0; n < 9; ++n) cut = text.find('\n', cut) + 1;
  write_text(ckpt, text.substr(0, cut) + text.substr(cut, 40));  // keep a torn line
  fs::remove(r.dir() / "records.jsonl");
  for (const auto& s : testing::Pipeline::steps()) {
    if (s != "split") ok = ok && r.step(s) == 0;
  }
  if (!ok) throw std::runtime_error("restart run failed:\n" + r.log());
  compare("restart_mid_annotate", r.outputs());

  const double secs = seconds_since(start);
  o.notes.push_back(fmt::format("files={} bytes={} runtime={:.1f}s", reference.size(), bytes, secs));
  return o;
}

// Split rules

Outcome split_rules() {
  Outcome o;
  std::vector<dataset::RawSample> raw;
  for (int i = 0; i < 600; ++i) {
    dataset::RawSample s;
    s.id = fmt::format("s{:04}", i);
    s.image_id = fmt::format("img{}", i % 250);  // every image is shared by two or three samples
    s.data_type = i % 3 == 0 ? DataType::Reasoning : DataType::Conversation;
    s.image_context = "ctx";
    s.turns.push_back({fmt::format("question {}?", i), "answer."});
    if (i % 5 == 0) s.turns.push_back({fmt::format("follow-up {}?", i), "answer two."});
    raw.push_back(std::move(s));
  }
  dataset::SplitRuleSet rules;
  rules.target_counts = {{DataType::Conversation, 120}, {DataType::Reasoning, 60}};
  const auto result = dataset::build_splits(raw, rules, 5);
  std::set<std::string> images;
  bool unique = true;
  for (const auto& s : result.feedback) unique = unique && images.insert(s.image_id).second;
  std::set<std::string> sft_ids;
  for (const auto& s : result.sft) sft_ids.insert(s.id);
  std::size_t overlap = 0;
  for (const auto& s : result.feedback) overlap += sft_ids.contains(s.id) ? 1 : 0;
  o.require(unique, fmt::format("feedback={} unique_images={}", result.feedback.size(), unique ? "yes" : "no"));
  o.require(overlap == 0, fmt::format("sft_and_feedback_overlap={}", overlap));

  std::vector<int> pool(5874);
  std::iota(pool.begin(), pool.end(), 0);
  const auto [train, test] = dataset::freeze_split(pool, 4764, 1110, 3);
  std::set<int> all(train.begin(), train.end());
  all.insert(test.begin(), test.end());
  o.require(train.size() == 4764 && test.size() == 1110 && all.size() == 5874,
            fmt::format("freeze 5874->{}/{} disjoint={}", train.size(), test.size(), all.size() == 5874 ? "yes" : "no"));
  return o;
}

// Curation loop

Outcome curation_loop() {
  Outcome o;
  const auto log = scratch("curation") / "audit.jsonl";
  std::vector<dataset::Candidate> candidates;
  for (int i = 0; i < 30; ++i) {
    const bool leak = i % 4 == 1;
    candidates.push_back({fmt::format("c{:02}", i),
                          leak ? fmt::format("Without any image, tell me how to do thing {}", i)
                               : fmt::format("What is the person in this photo holding {}?", i),
                          "I cannot help with that.", Json::object()});
  }
  const std::string pattern = "without any image";
  dataset::FailurePredicate predicate{dataset::PredicateKind::Regex, pattern, {}, ""};
  Json before;
  std::set<std::string> round1;
  {
    curate::CurationService svc({log, std::nullopt, 50, 500}, {});
    svc.seed(candidates, {{"answerable_without_image", predicate}});
    // Reject one matching item under the tag; accept every non-matching one and leave the
    // other matching items unresolved.
    svc.post_verdict(0, Json{{"id", "c01"}, {"verdict", "reject"}, {"tag", "answerable_without_image"}}.dump());
    for (const auto& c : candidates) {
      if (c.question.find("Without") == std::string::npos) {
        svc.post_verdict(0, Json{{"id", c.id}, {"verdict", "accept"}}.dump());
      }
    }
    const auto adv = svc.advance(0, true, "{}");
    if (adv.status != 200) throw std::runtime_error("advance failed: " + adv.body.dump());
    const auto page = svc.list_items(adv.body.at("new_round_index").get<int>(), "", "500");
    for (const auto& item : page.body.at("items")) round1.insert(item.at("id").get<std::string>());
    before = svc.snapshot();
  }
  const std::regex re(pattern, std::regex::icase);
  std::size_t matching = 0;
  std::size_t leaked = 0;
  for (const auto& c : candidates) {
    const bool m = std::regex_search(c.question, re) || std::regex_search(c.response, re);
    matching += m ? 1 : 0;
    leaked += m && round1.contains(c.id) ? 1 : 0;
  }
  o.require(leaked == 0 && round1.size() == candidates.size() - matching,
            fmt::format("matching={} in_next_round={} survivors={}", matching, leaked, round1.size()));
  curate::CurationService replayed({log, std::nullopt, 50, 500}, {});
  o.require(replayed.snapshot() == before, "replayed_state=identical");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"objective-gradient", objective_gradient},
      {"conditioning-effect", conditioning_effect},
      {"regularization-ablation", regularization_ablation},
      {"turn-state-machine", turn_state_machine},
      {"serialization-contract", serialization_contract},
      {"chair-oracle", chair_oracle},
      {"spearman-oracle", spearman_oracle},
      {"multiturn-harness", multiturn_harness},
      {"pipeline-determinism", pipeline_determinism},
      {"split-rules", split_rules},
      {"curation-loop (secondary)", curation_loop},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes = {std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << "  " << fmt::format("{}", fmt::join(o.notes, "  ")) << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
  return failed == 0 ? 0 : 1;
}
