#include "pipeline.hpp"

#include <array>
#include <iostream>

#include <fmt/format.h>

#include "nlf/core/util.hpp"

namespace nlf::testing {

namespace {

constexpr std::array<std::string_view, 36> kWords = {
    "red",     "blue",   "green",  "small", "large",  "dog",    "cat",      "table",  "chair",
    "man",     "woman",  "car",    "tree",  "sky",    "grass",  "ball",     "plate",  "cup",
    "window",  "door",   "left",   "right", "near",   "behind", "holding",  "sitting",
    "standing", "wooden", "metal", "white", "black",  "bright", "dark",     "two",    "three", "street"};

std::string sentence(Rng& rng, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += kWords[rng.below(kWords.size())];
  }
  return out;
}

std::string question(Rng& rng, std::size_t k) {
  return fmt::format("What is the {} {} doing number {}?", kWords[rng.below(kWords.size())],
                     kWords[rng.below(kWords.size())], k);
}

}  // namespace

PipelineCorpus pipeline_corpus(std::uint64_t seed, std::size_t samples, std::size_t eval_items) {
  Rng rng(seed);
  PipelineCorpus c;
  std::size_t q = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const auto image = fmt::format("img{:03}", i % (samples - samples / 5));  // some images repeat
    Json row{{"id", fmt::format("s{:03}", i)},
             {"image_id", image},
             {"data_type", i % 3 == 2 ? "reasoning" : "conversation"},
             {"image_context", sentence(rng, 8)}};
    const std::size_t turns = i % 4 == 0 ? 2 : 1;
    Json t = Json::array();
    for (std::size_t k = 0; k < turns; ++k) {
      const auto text = question(rng, q++);
      const auto answer = sentence(rng, 6) + ".";
      t.push_back({{"question", text}, {"answer", answer}});
      c.world_items.push_back({text, answer});
    }
    row["turns"] = t;
    c.raw.push_back(row);
  }
  const std::array<std::string_view, 3> categories = {"conversation", "description", "reasoning"};
  for (std::size_t i = 0; i < eval_items; ++i) {
    const auto text = question(rng, q++);
    const auto reference = sentence(rng, 6) + ".";
    c.eval_items.push_back({{"id", fmt::format("e{:03}", i)},
                            {"question", text},
                            {"scene", sentence(rng, 8)},
                            {"reference", reference},
                            {"category", categories[i % categories.size()]}});
    c.world_items.push_back({text, reference});
  }
  for (std::size_t i = 0; i < samples / 2; ++i) {
    c.captions.push_back({{"id", fmt::format("cap{:03}", i)},
                          {"image_context", sentence(rng, 8)},
                          {"caption", "A " + sentence(rng, 5) + "."}});
  }
  return c;
}

Pipeline::Pipeline(PipelineCorpus corpus, fs::path dir, std::string profile, fs::path archive, int parallelism)
    : corpus_(std::move(corpus)),
      dir_(std::move(dir)),
      profile_(std::move(profile)),
      archive_(std::move(archive)),
      parallelism_(parallelism) {
  auto items = corpus_.world_items;
  std::vector<std::string> policies = {"policy"};
  kinds_["world"] = [items, policies] { return std::make_shared<SyntheticWorld>(items, policies); };
}

const std::vector<std::string>& Pipeline::steps() {
  static const std::vector<std::string> s = {"split", "annotate", "serialize", "train-toy",
                                             "eval-llava", "eval-caption", "eval-multiturn"};
  return s;
}

const std::vector<std::string>& pipeline_output_files() {
  static const std::vector<std::string> f = {"split/sft.jsonl",        "split/feedback.jsonl",
                                             "records.jsonl",          "sequences.jsonl",
                                             "model.json",             "model.json.curve.csv",
                                             "eval_llava.json",        "eval_caption.json",
                                             "eval_multiturn.json",    "eval_multiturn.json.curve.csv"};
  return f;
}

void Pipeline::prepare() {
  fs::remove_all(dir_);
  fs::create_directories(dir_);
  write_jsonl(dir_ / "raw.jsonl", corpus_.raw);
  write_jsonl(dir_ / "eval.jsonl", corpus_.eval_items);
  write_jsonl(dir_ / "captions.jsonl", corpus_.captions);
  const Json config{
      {"seed", 7},
      {"parallelism", parallelism_},
      {"provider", profile_},
      {"profiles",
       {{"world", {{"kind", "world"}}},
        {"record", {{"kind", "record"}, {"inner", "world"}, {"archive", archive_.string()}}},
        {"fixtures", {{"kind", "fixtures"}, {"archive", archive_.string()}}}}},
      {"split", {{"rules", {{"target_counts", {{"conversation", 12}, {"reasoning", 6}}}}}}},
      {"train", {{"epochs", 40}, {"step_size", 1.0}}},
  };
  write_text(dir_ / "config.json", config.dump(2));
}

std::vector<std::string> Pipeline::args(const std::string& name) const {
  const auto p = [&](const char* f) { return (dir_ / f).string(); };
  const std::vector<std::string> common = {"--config", p("config.json")};
  std::vector<std::string> a;
  if (name == "split") {
    a = {"split", "--in", p("raw.jsonl"), "--out-dir", p("split")};
  } else if (name == "annotate") {
    a = {"annotate", "--in", p("split/feedback.jsonl"), "--out", p("records.jsonl")};
  } else if (name == "serialize") {
    a = {"serialize", "--in", p("records.jsonl"), "--captions", p("captions.jsonl"), "--out", p("sequences.jsonl")};
  } else if (name == "train-toy") {
    a = {"train-toy", "--in", p("sequences.jsonl"), "--out", p("model.json")};
  } else if (name == "eval-llava") {
    a = {"eval", "--task", "llava_eval", "--in", p("eval.jsonl"), "--out", p("eval_llava.json"), "--toy-model",
         p("model.json")};
  } else if (name == "eval-caption") {
    a = {"eval", "--task", "captioning", "--instruction", "1", "--in", p("eval.jsonl"), "--out", p("eval_caption.json"),
         "--toy-model", p("model.json")};
  } else if (name == "eval-multiturn") {
    a = {"eval", "--task", "multiturn", "--feedback-provider", "judge", "--in", p("eval.jsonl"), "--out",
         p("eval_multiturn.json")};
  } else {
    throw InvalidArgument("unknown pipeline step " + name);
  }
  a.insert(a.end(), common.begin(), common.end());
  return a;
}

int Pipeline::step(const std::string& name) {
  std::ostringstream out;
  return cli::run(args(name), out, log_, kinds_);
}

std::vector<int> Pipeline::run_all() {
  std::vector<int> codes;
  for (const auto& s : steps()) {
    codes.push_back(step(s));
    if (codes.back() != 0) break;
  }
  return codes;
}

std::map<std::string, std::string> Pipeline::outputs() const {
  std::map<std::string, std::string> out;
  for (const auto& f : pipeline_output_files()) {
    out[f] = fs::exists(dir_ / f) ? read_text(dir_ / f) : std::string("<missing>");
  }
  return out;
}

}  // namespace nlf::testing
