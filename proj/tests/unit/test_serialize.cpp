#include <doctest.h>

#include "contract.hpp"
#include "generators.hpp"
#include "nlf/serialize/sequence.hpp"

using namespace nlf;
using namespace nlf::serialize;

namespace {

using Tokens = std::vector<std::string>;

FeedbackRecord two_turn() {
  FeedbackRecord r;
  r.id = "r1";
  r.aspect = Aspect::Helpfulness;
  r.image_ref = "img1";
  r.image_context = "dog, beach";
  r.question = "What now?";
  r.ground_truth = "It runs.";
  r.turns = {InteractionTurn{"It sits.", Rating(2), "wrong action", "Wrong action, describes sitting", std::string("Say it runs.")},
             InteractionTurn{"It runs.", Rating(4), "", "Nice response.", std::nullopt}};
  return r;
}

Tokens masked(const TrainingSequence& s) {
  Tokens out;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (s.loss_mask[i]) out.push_back(s.tokens[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("tokenizer splits punctuation and keeps control tokens out of reach") {
  CHECK(tokenize("Hello, world!  It's <excellent> [x]") ==
        Tokens{"Hello", ",", "world", "!", "It", "'", "s", "<", "excellent", ">", "[", "x", "]"});
  for (const auto& t : tokenize("<bad> <image> [Nice response.] <refinement>")) CHECK_FALSE(is_control(t));
  CHECK(tokenize(detokenize(tokenize("a.b, c"))) == tokenize("a.b, c"));
}

TEST_CASE("ground-truth-only record") {
  auto r = two_turn();
  r.turns.erase(r.turns.begin());
  const auto s = serialize::serialize(r);
  const Tokens expected = {"<image>", "dog", ",", "beach", "<question>", "What", "now", "?",
                           "<excellent>", "[Nice response.]", "It", "runs", "."};
  CHECK(s.tokens == expected);
  CHECK(masked(s) == Tokens{"It", "runs", "."});
  CHECK(s.turn_count == 1);
  CHECK(s.sample_kind == SampleKind::Feedback);
}

TEST_CASE("two-turn record: the refinement conditions only the later response") {
  const auto s = serialize::serialize(two_turn());
  const Tokens expected = {"<image>", "dog", ",", "beach", "<question>", "What", "now", "?",
                           "<mediocre>", "[Wrong action, describes sitting]", "It", "sits", ".",
                           "<refinement>", "Say", "it", "runs", ".",
                           "<excellent>", "[Nice response.]", "It", "runs", "."};
  CHECK(s.tokens == expected);
  const std::vector<bool> mask = {false, false, false, false, false, false, false, false, false, false, true, true, true,
                                  false, false, false, false, false, false, false, true, true, true};
  CHECK(s.loss_mask == mask);
  CHECK(testing::check_serialization_contract(two_turn(), s).empty());
}

TEST_CASE("invalid records and limits are errors") {
  auto r = two_turn();
  r.turns[0].response = "";
  CHECK_THROWS_AS(serialize::serialize(r), InvalidRecord);
  r = two_turn();
  r.turns[0].response = "...";  // punctuation only is still a response
  CHECK_NOTHROW(serialize::serialize(r));
  r.turns[0].response = "   ";
  CHECK_THROWS_AS(serialize::serialize(r), InvalidRecord);

  SerializeOptions tight;
  tight.max_length = 10;
  CHECK_THROWS_AS(serialize::serialize(two_turn(), tight), SequenceTooLong);
  tight.max_length = 23;
  CHECK_NOTHROW(serialize::serialize(two_turn(), tight));
}

TEST_CASE("inference prefix") {
  CHECK(inference_prefix() == Tokens{"<excellent>", "[Nice response.]"});
  const auto verbalizer = parse_control(inference_prefix()[0]);
  REQUIRE(verbalizer);
  CHECK(verbalizer->kind == ControlKind::VerbalizerOpen);
  CHECK(verbalizer->payload == "excellent");
  CHECK(devebalize(verbalizer->payload).value() == 4);
  CHECK(parse_control(inference_prefix()[1])->payload == "Nice response.");
  CHECK(detokenize(inference_prefix()) == "<excellent> [Nice response.]");
}

TEST_CASE("regularization sequences") {
  const auto s = serialize_regularization("c1", "a dog , a beach", "A dog runs on the beach .");
  CHECK(s.sample_kind == SampleKind::Regularization);
  CHECK(masked(s) == tokenize("A dog runs on the beach."));
  CHECK(s.tokens.front() == "<image>");
  const auto back = deserialize_regularization(s);
  CHECK(back.image_context == "a dog , a beach");
  CHECK(back.caption == "A dog runs on the beach .");
  const auto again = serialize_regularization("c1", back.image_context, back.caption);
  CHECK(Json(again) == Json(s));

  const auto bare = serialize_regularization("c2", "", "cat");
  CHECK(bare.tokens == Tokens{"<image>", "cat"});
  CHECK_THROWS_AS(serialize_regularization("c3", "x", "  "), InvalidArgument);
}

TEST_CASE("serialization contract holds on 1000 random records") {
  Rng rng(2718);
  std::size_t problems = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto rec = testing::random_record(rng, "r" + std::to_string(i));
    const auto seq = serialize::serialize(rec);
    const auto found = testing::check_serialization_contract(rec, seq);
    for (const auto& p : found) MESSAGE(p);
    problems += found.size();
    CHECK(Json(seq) == Json(serialize::serialize(rec)));
    CHECK(Json(seq).get<TrainingSequence>().tokens == seq.tokens);
  }
  CHECK(problems == 0);
}

TEST_CASE("the contract checker catches broken layouts") {
  const auto rec = two_turn();
  auto seq = serialize::serialize(rec);
  std::swap(seq.tokens[8], seq.tokens[9]);  // critique before rating
  CHECK_FALSE(testing::check_serialization_contract(rec, seq).empty());

  seq = serialize::serialize(rec);
  seq.loss_mask[13] = true;  // mask the <refinement> opener
  CHECK_FALSE(testing::check_serialization_contract(rec, seq).empty());

  // Move s^1 in front of r^1.
  seq = serialize::serialize(rec);
  Tokens moved(seq.tokens.begin(), seq.tokens.begin() + 10);
  moved.insert(moved.end(), seq.tokens.begin() + 13, seq.tokens.begin() + 18);
  moved.insert(moved.end(), seq.tokens.begin() + 10, seq.tokens.begin() + 13);
  moved.insert(moved.end(), seq.tokens.begin() + 18, seq.tokens.end());
  seq.tokens = moved;
  seq.loss_mask = {false, false, false, false, false, false, false, false, false, false, false, false, false,
                   false, false, true, true, true, false, false, true, true, true};
  CHECK_FALSE(testing::check_serialization_contract(rec, seq).empty());
}

TEST_CASE("per-turn mode masks one response per sequence") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto rec = testing::random_record(rng, "p" + std::to_string(i));
    const auto full = serialize::serialize(rec);
    const auto parts = serialize_per_turn(rec);
    REQUIRE(parts.size() == rec.turns.size());
    for (std::size_t j = 0; j < parts.size(); ++j) {
      CHECK(masked(parts[j]) == tokenize(rec.turns[j].response));
      // Same tokens as the full sequence up to the end of r^j.
      const Tokens head(full.tokens.begin(), full.tokens.begin() + static_cast<std::ptrdiff_t>(parts[j].tokens.size()));
      CHECK(head == parts[j].tokens);
    }
  }
}

TEST_CASE("ablation variants") {
  Rng rng(8);
  std::vector<FeedbackRecord> records;
  for (int i = 0; i < 200; ++i) records.push_back(testing::random_record(rng, "a" + std::to_string(i)));
  const std::vector<CaptionPair> captions = {{"ctx", "a caption"}};

  CorpusOptions no_critique;
  no_critique.sequence.critique_on = false;
  for (const auto& s : serialize_corpus(records, captions, no_critique)) {
    for (const auto& t : s.tokens) {
      const auto c = parse_control(t);
      CHECK_FALSE((c && c->kind == ControlKind::CritiqueOpen));
    }
  }

  CorpusOptions no_refinement;
  no_refinement.sequence.refinement_on = false;
  const auto corpus = serialize_corpus(records, captions, no_refinement);
  CHECK(corpus.size() == 201);
  for (const auto& s : corpus) {
    if (s.sample_kind == SampleKind::Feedback) CHECK(s.turn_count <= 2);
    CHECK(std::find(s.tokens.begin(), s.tokens.end(), "<refinement>") == s.tokens.end());
  }

  CorpusOptions sft_only;
  sft_only.rlaif_on = false;
  for (const auto& s : serialize_corpus(records, {}, sft_only)) CHECK(s.turn_count == 1);

  CorpusOptions honesty;
  honesty.aspects = {Aspect::Honesty};
  std::size_t expected = 0;
  for (const auto& r : records) expected += r.aspect == Aspect::Honesty ? 1 : 0;
  CHECK(serialize_corpus(records, {}, honesty).size() == expected);
}
