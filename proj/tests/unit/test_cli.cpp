#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <fmt/format.h>

#include "cli.hpp"
#include "nlf/core/io.hpp"
#include "nlf/core/util.hpp"
#include "nlf/dataset/curation.hpp"
#include "nlf/metrics/metrics.hpp"
#include "pipeline.hpp"

using namespace nlf;

namespace {

struct Result {
  int code;
  std::string out;
  std::string log;
};

Result nlf_run(const std::vector<std::string>& args, const cli::ProviderKinds& kinds = {}) {
  std::ostringstream out;
  std::ostringstream log;
  const int code = cli::run(args, out, log, kinds);
  return {code, out.str(), log.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "nlf_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Json manifest(const fs::path& p) { return Json::parse(read_text(p)); }

// One recorded archive shared by the tests that replay fixtures.
const fs::path& recorded_archive() {
  static const fs::path archive = [] {
    const auto dir = scratch("recording");
    const auto path = dir / "archive.jsonl";
    testing::Pipeline p(testing::pipeline_corpus(11), dir / "run", "record", path, 1);
    p.prepare();
    const auto codes = p.run_all();
    for (auto c : codes) {
      if (c != 0) throw std::runtime_error("recording run failed:\n" + p.log());
    }
    return path;
  }();
  return archive;
}

}  // namespace

TEST_CASE("help, unknown subcommands and missing seeds") {
  auto r = nlf_run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("curate-serve") != std::string::npos);
  CHECK(nlf_run({"frobnicate"}).code == cli::kExitConfig);
  CHECK(nlf_run({}).code == cli::kExitConfig);

  const auto dir = scratch("seed");
  write_jsonl(dir / "raw.jsonl", testing::pipeline_corpus(1).raw);
  r = nlf_run({"split", "--in", (dir / "raw.jsonl").string(), "--out-dir", (dir / "out").string()});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.log.find("--seed") != std::string::npos);
  CHECK(nlf_run({"train-toy", "--synthetic", "--out", (dir / "m.json").string()}).code == cli::kExitConfig);
  CHECK(nlf_run({"train-toy", "--synthetic", "--out", (dir / "m.json").string(), "--seed", "-3"}).code ==
        cli::kExitConfig);
  CHECK(nlf_run({"split", "--in", (dir / "nope.jsonl").string(), "--out-dir", (dir / "out").string(), "--seed", "1"})
            .code == cli::kExitConfig);
}

TEST_CASE("flags override the config file, which overrides defaults") {
  const auto dir = scratch("precedence");
  write_text(dir / "config.json", Json{{"seed", 5}, {"train", {{"epochs", 5}, {"alpha", 0.5}}}}.dump());
  const auto model = (dir / "m.json").string();
  const auto base = std::vector<std::string>{"train-toy", "--synthetic", "--out", model, "--config",
                                             (dir / "config.json").string()};

  REQUIRE(nlf_run(base).code == 0);
  auto m = manifest(model + ".manifest.json");
  CHECK(m.at("config").at("train").at("epochs") == 5);
  CHECK(m.at("config").at("train").at("alpha") == 0.5);
  CHECK(m.at("config").at("train").at("step_size") == 1.0);  // default
  CHECK(m.at("seed") == 5);

  auto with_flags = base;
  with_flags.insert(with_flags.end(), {"--epochs", "3", "--seed", "9"});
  REQUIRE(nlf_run(with_flags).code == 0);
  m = manifest(model + ".manifest.json");
  CHECK(m.at("config").at("train").at("epochs") == 3);
  CHECK(m.at("config").at("train").at("alpha") == 0.5);
  CHECK(m.at("seed") == 9);
  // epochs 0..3 plus the header
  const auto curve = read_text(model + ".curve.csv");
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 5);
}

TEST_CASE("a remote profile without credentials exits 2 with the AuthError text") {
  const auto dir = scratch("auth");
  ::unsetenv("NLF_TEST_MISSING_KEY");
  write_jsonl(dir / "in.jsonl", {Json{{"id", "a"}, {"aspect", "helpfulness"}, {"image_ref", "i"}, {"question", "Q?"}, {"ground_truth", "A."}}});
  write_text(dir / "config.json",
             Json{{"profiles", {{"remote", {{"auth_env_var", "NLF_TEST_MISSING_KEY"}}}}}}.dump());
  const auto r = nlf_run({"annotate", "--provider", "remote", "--config", (dir / "config.json").string(), "--in",
                          (dir / "in.jsonl").string(), "--out", (dir / "out.jsonl").string(), "--seed", "7"});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.log.find("AuthError") != std::string::npos);
  CHECK(r.log.find("NLF_TEST_MISSING_KEY") != std::string::npos);
  const auto m = manifest(dir / "out.jsonl.manifest.json");
  CHECK(m.at("exit_code") == 2);
  CHECK(m.at("error").get<std::string>().find("AuthError") != std::string::npos);
}

TEST_CASE("annotate under fixtures twice gives identical outputs") {
  const auto archive = recorded_archive();
  const auto recorded = archive.parent_path() / "run";
  std::string first;
  std::string first_manifest;
  for (int pass = 0; pass < 2; ++pass) {
    const auto dir = scratch(fmt::format("annotate{}", pass));
    const auto r = nlf_run({"annotate", "--provider", "fixtures", "--fixtures", archive.string(), "--in",
                            (recorded / "split/feedback.jsonl").string(), "--out", (dir / "records.jsonl").string(),
                            "--manifest", (dir / "../annotate.manifest.json").string(), "--seed", "7"});
    REQUIRE_MESSAGE(r.code == 0, r.log);
    const auto out = read_text(dir / "records.jsonl");
    CHECK(out == read_text(recorded / "records.jsonl"));
    auto m = manifest(dir / "../annotate.manifest.json");
    CHECK(m.at("outputs").at("records").at("sha256") == sha256_hex(out));
    CHECK(m.at("inputs").at("samples").at("sha256") == sha256_hex(read_text(recorded / "split/feedback.jsonl")));
    CHECK(m.at("provider").at("kind") == "fixtures");
    CHECK(m.at("provider").at("archive").at("sha256") == sha256_hex(read_text(archive)));
    CHECK(m.at("templates").contains("helpfulness_annotation"));
    if (pass == 0) {
      first = out;
      first_manifest = m.dump();
    } else {
      CHECK(out == first);
    }
  }
  // In place: the rerun skips finished samples and rewrites the same bytes.
  const auto dir = fs::temp_directory_path() / "nlf_test_cli" / "annotate1";
  const auto r = nlf_run({"annotate", "--provider", "fixtures", "--fixtures", archive.string(), "--in",
                          (recorded / "split/feedback.jsonl").string(), "--out", (dir / "records.jsonl").string(),
                          "--seed", "7"});
  CHECK(r.code == 0);
  CHECK(read_text(dir / "records.jsonl") == first);
  CHECK(manifest(dir / "records.jsonl.manifest.json").at("summary").at("skipped").get<int>() > 0);
}

TEST_CASE("eval captioning reports CHAIR") {
  const auto dir = scratch("caption");
  const auto corpus = testing::pipeline_corpus(3);
  write_jsonl(dir / "eval.jsonl", corpus.eval_items);
  REQUIRE(nlf_run({"train-toy", "--synthetic", "--out", (dir / "m.json").string(), "--epochs", "5", "--seed", "1"}).code == 0);
  const auto r = nlf_run({"eval", "--task", "captioning", "--instruction", "1", "--in", (dir / "eval.jsonl").string(),
                          "--out", (dir / "report.json").string(), "--toy-model", (dir / "m.json").string(), "--seed",
                          "1"});
  REQUIRE_MESSAGE(r.code == 0, r.log);
  const auto report = Json::parse(read_text(dir / "report.json"));
  CHECK(report.at("chair").contains("chair_i"));
  CHECK(report.at("chair").contains("chair_s"));
  CHECK(manifest(dir / "report.json.manifest.json").at("summary").at("chair").contains("chair_i"));

  // Tasks that need a judge refuse to run without a provider.
  const auto bad = nlf_run({"eval", "--task", "llava_eval", "--in", (dir / "eval.jsonl").string(), "--out",
                            (dir / "r2.json").string(), "--toy-model", (dir / "m.json").string(), "--seed", "1"});
  CHECK(bad.code == cli::kExitConfig);
  CHECK(nlf_run({"eval", "--task", "poetry", "--in", (dir / "eval.jsonl").string(), "--out",
                 (dir / "r3.json").string(), "--seed", "1"})
            .code == cli::kExitConfig);
}

TEST_CASE("per-item failures above the threshold exit 1 and name the sample") {
  const auto dir = scratch("threshold");
  FeedbackRecord good{"r1", Aspect::Helpfulness, "img", "a scene", "Q?", "Answer.", {}};
  good.turns.push_back({"Answer.", Rating(4), "", "Nice response.", std::nullopt});
  auto bad = good;
  bad.id = "r2";
  bad.turns.insert(bad.turns.begin(), InteractionTurn{"Meh.", Rating(2), "", "Fine.", std::nullopt});
  write_jsonl(dir / "records.jsonl", {Json(good), Json(bad)});
  const std::vector<std::string> base = {"serialize", "--in", (dir / "records.jsonl").string(), "--out",
                                         (dir / "seq.jsonl").string()};

  auto strict = base;
  strict.insert(strict.end(), {"--max-failure-rate", "0"});
  auto r = nlf_run(strict);
  CHECK(r.code == cli::kExitItemFailures);
  CHECK(r.log.find("record r2") != std::string::npos);
  CHECK(read_jsonl(dir / "seq.jsonl").size() == 1);

  auto lenient = base;
  lenient.insert(lenient.end(), {"--max-failure-rate", "0.5"});
  r = nlf_run(lenient);
  CHECK(r.code == 0);
  CHECK(manifest(dir / "seq.jsonl.manifest.json").at("summary").at("failures") == 1);
  CHECK(nlf_run({"serialize", "--in", (dir / "records.jsonl").string(), "--out", (dir / "seq.jsonl").string(),
                 "--max-failure-rate", "2"})
            .code == cli::kExitConfig);
}

TEST_CASE("split writes both sets and freezes a pool to exact sizes") {
  const auto dir = scratch("split");
  const auto corpus = testing::pipeline_corpus(5);
  write_jsonl(dir / "raw.jsonl", corpus.raw);
  auto r = nlf_run({"split", "--in", (dir / "raw.jsonl").string(), "--out-dir", (dir / "out").string(), "--target",
                    "conversation=10", "--target", "reasoning=5", "--seed", "3"});
  REQUIRE_MESSAGE(r.code == 0, r.log);
  const auto feedback = read_jsonl(dir / "out/feedback.jsonl");
  CHECK(feedback.size() == 15);
  std::set<std::string> images;
  for (const auto& f : feedback) images.insert(f.at("image_id").get<std::string>());
  CHECK(images.size() == feedback.size());
  const auto m = manifest(dir / "out/split.manifest.json");
  CHECK(m.at("summary").at("split_counts").at("feedback.conversation") == 10);

  r = nlf_run({"split", "--in", (dir / "raw.jsonl").string(), "--out-dir", (dir / "o2").string(), "--target",
               "conversation=1000", "--seed", "3"});
  CHECK(r.code == cli::kExitConfig);

  std::vector<Json> pool;
  for (int i = 0; i < 5874; ++i) pool.push_back(Json{{"id", i}});
  write_jsonl(dir / "pool.jsonl", pool);
  r = nlf_run({"split", "--in", (dir / "pool.jsonl").string(), "--out-dir", (dir / "frozen").string(),
               "--freeze-train", "4764", "--freeze-test", "1110", "--seed", "3"});
  REQUIRE_MESSAGE(r.code == 0, r.log);
  CHECK(read_jsonl(dir / "frozen/train.jsonl").size() == 4764);
  CHECK(read_jsonl(dir / "frozen/test.jsonl").size() == 1110);
}

TEST_CASE("metrics and report subcommands") {
  const auto dir = scratch("metrics");
  const fs::path fixtures = NLF_FIXTURE_DIR;
  auto r = nlf_run({"metrics", "--kind", "chair", "--in", (fixtures / "chair/captions.jsonl").string(), "--lexicon",
                    (fixtures / "chair/lexicon.json").string(), "--out", (dir / "chair.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.log);
  const auto lexicon = metrics::ObjectLexicon::load((fixtures / "chair/lexicon.json").string());
  std::vector<metrics::ChairItem> items;
  for (const auto& row : read_jsonl(fixtures / "chair/captions.jsonl")) {
    items.push_back({row.at("caption"), row.at("annotated").get<std::set<std::string>>()});
  }
  const auto expected = metrics::chair(items, lexicon);
  const auto got = Json::parse(read_text(dir / "chair.json"));
  CHECK(got.at("chair_i").get<double>() == expected.chair_i);
  CHECK(got.at("chair_s").get<double>() == expected.chair_s);

  write_jsonl(dir / "agree.jsonl", {Json{{"id", "a"}, {"judge", 1}, {"human", 2}}, Json{{"id", "b"}, {"judge", 2}, {"human", 1}},
                                    Json{{"id", "c"}, {"judge", 3}, {"human", 4}}, Json{{"id", "d"}, {"judge", 4}, {"human", 5}},
                                    Json{{"id", "e"}, {"judge", 5}, {"human", 3}}});
  r = nlf_run({"metrics", "--kind", "agreement", "--in", (dir / "agree.jsonl").string(), "--out",
               (dir / "agree.json").string()});
  REQUIRE(r.code == 0);
  CHECK(Json::parse(read_text(dir / "agree.json")).at("spearman").get<double>() == doctest::Approx(0.6).epsilon(1e-12));

  r = nlf_run({"report", "--in", (dir / "chair.json").string(), "--in", (dir / "agree.json.manifest.json").string(),
               "--out", (dir / "report.md").string()});
  REQUIRE(r.code == 0);
  const auto md = read_text(dir / "report.md");
  CHECK(md.find("chair.json") != std::string::npos);
  CHECK(md.find("Run of `metrics` exited with 0") != std::string::npos);
}

TEST_CASE("curate-serve replays and seeds the audit log") {
  const auto dir = scratch("curate");
  std::vector<Json> candidates;
  for (int i = 0; i < 6; ++i) {
    candidates.push_back(dataset::Candidate{fmt::format("c{}", i), i % 2 ? "How do I pick a lock?" : "Where are the pills?",
                                            "I cannot help.", Json::object()});
  }
  write_jsonl(dir / "candidates.jsonl", candidates);
  dataset::FailurePredicate lock;
  lock.kind = dataset::PredicateKind::Keyword;
  lock.keywords = {"pick a lock"};
  write_text(dir / "tags.json", Json{{"lockpicking", lock}}.dump());
  const std::vector<std::string> base = {"curate-serve", "--audit", (dir / "audit.jsonl").string(), "--candidates",
                                         (dir / "candidates.jsonl").string(), "--tags", (dir / "tags.json").string(),
                                         "--dry-run", "--snapshot", (dir / "snap.json").string()};
  ::unsetenv("NLF_CURATE_TOKEN");
  auto r = nlf_run(base);
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.log.find("NLF_CURATE_TOKEN") != std::string::npos);

  ::setenv("NLF_CURATE_TOKEN", "t0ken", 1);
  r = nlf_run(base);
  ::unsetenv("NLF_CURATE_TOKEN");
  REQUIRE_MESSAGE(r.code == 0, r.log);
  const auto snap = read_text(dir / "snap.json");
  CHECK(Json::parse(snap).dump().find("lockpicking") != std::string::npos);

  auto open = base;
  open.push_back("--no-auth");
  r = nlf_run(open);
  CHECK(r.code == 0);
  CHECK(r.log.find("already holds rounds") != std::string::npos);
  CHECK(read_text(dir / "snap.json") == snap);
}
