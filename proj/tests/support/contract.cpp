#include "contract.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace nlf::testing {

namespace {

using Tokens = std::vector<std::string>;

bool contains_block(const Tokens& hay, std::size_t end, const Tokens& block) {
  if (block.empty() || block.size() > end) return block.empty();
  for (std::size_t i = 0; i + block.size() <= end; ++i) {
    if (std::equal(block.begin(), block.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

Tokens with_head(std::string head, const Tokens& rest) {
  Tokens out{std::move(head)};
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

std::vector<std::string> check_serialization_contract(const FeedbackRecord& record,
                                                      const serialize::TrainingSequence& seq) {
  std::vector<std::string> problems;
  auto fail = [&](std::string msg) { problems.push_back(fmt::format("{}: {}", record.id, msg)); };
  if (seq.tokens.size() != seq.loss_mask.size()) {
    fail("token and mask lengths differ");
    return problems;
  }

  // Masked runs.
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    if (!seq.loss_mask[i]) continue;
    if (runs.empty() || runs.back().second != i) {
      runs.emplace_back(i, i + 1);
    } else {
      runs.back().second = i + 1;
    }
  }
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    if (seq.loss_mask[i] && serialize::is_control(seq.tokens[i])) fail(fmt::format("control token masked at {}", i));
  }
  if (runs.size() != record.turns.size()) {
    fail(fmt::format("{} masked spans for {} turns", runs.size(), record.turns.size()));
    return problems;
  }

  const Tokens image = with_head("<image>", serialize::tokenize(record.image_context));
  const Tokens question = with_head("<question>", serialize::tokenize(record.question));
  for (std::size_t j = 0; j < record.turns.size(); ++j) {
    const auto& t = record.turns[j];
    const auto [begin, end] = runs[j];
    const Tokens span(seq.tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                      seq.tokens.begin() + static_cast<std::ptrdiff_t>(end));
    if (span != serialize::tokenize(t.response)) fail(fmt::format("span {} is not response {}", j, j));

    if (!contains_block(seq.tokens, begin, image)) fail(fmt::format("image missing before response {}", j));
    if (!contains_block(seq.tokens, begin, question)) fail(fmt::format("question missing before response {}", j));
    // n^j and l'^j sit directly in front of r^j.
    const std::string verbalizer = fmt::format("<{}>", kVerbalizerWords[static_cast<std::size_t>(t.rating.value() - 1)]);
    const std::string critique = "[" + t.critique + "]";
    if (begin < 2 || seq.tokens[begin - 2] != verbalizer || seq.tokens[begin - 1] != critique) {
      fail(fmt::format("rating/critique of turn {} not directly before its response", j));
    }
    for (std::size_t k = 0; k < j; ++k) {
      const auto& e = record.turns[k];
      if (runs[k].second > begin) fail(fmt::format("response {} not before response {}", k, j));
      if (!contains_block(seq.tokens, begin, {fmt::format("<{}>", kVerbalizerWords[static_cast<std::size_t>(e.rating.value() - 1)]),
                                              "[" + e.critique + "]"})) {
        fail(fmt::format("turn {} rating/critique missing before response {}", k, j));
      }
      if (e.refinement && !contains_block(seq.tokens, begin, with_head("<refinement>", serialize::tokenize(*e.refinement)))) {
        fail(fmt::format("refinement {} missing before response {}", k, j));
      }
    }
    // s^j: none of the refinement blocks in the prefix may belong to turn j, and it must
    // start right after r^j.
    const auto opened = static_cast<std::size_t>(
        std::count(seq.tokens.begin(), seq.tokens.begin() + static_cast<std::ptrdiff_t>(begin), std::string("<refinement>")));
    std::size_t earlier = 0;
    for (std::size_t k = 0; k < j; ++k) earlier += record.turns[k].refinement ? 1 : 0;
    if (opened != earlier) fail(fmt::format("prefix of response {} holds {} refinements, expected {}", j, opened, earlier));
    if (t.refinement) {
      const Tokens block = with_head("<refinement>", serialize::tokenize(*t.refinement));
      const bool after = end + block.size() <= seq.tokens.size() &&
                         std::equal(block.begin(), block.end(), seq.tokens.begin() + static_cast<std::ptrdiff_t>(end));
      if (!after) fail(fmt::format("refinement {} does not follow its response", j));
    }
  }

  std::size_t expected_mask = 0;
  for (const auto& t : record.turns) expected_mask += serialize::tokenize(t.response).size();
  if (seq.masked_count() != expected_mask) fail("mask count differs from total response length");
  return problems;
}

}  // namespace nlf::testing
