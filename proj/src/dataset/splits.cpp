#include "nlf/dataset/splits.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <fmt/format.h>

namespace nlf::dataset {

void from_json(const Json& j, RawSample& s) {
  s.id = require_string(j, "id");
  s.image_id = require_string(j, "image_id");
  s.image_ref = j.value("image_ref", s.image_id);
  s.data_type = parse_data_type(j.value("data_type", "conversation"));
  s.aspect.reset();
  if (j.contains("aspect") && !j.at("aspect").is_null()) s.aspect = parse_aspect(j.at("aspect").get<std::string>());
  s.image_context = j.value("image_context", "");
  s.turns.clear();
  if (j.contains("turns")) {
    for (const auto& t : j.at("turns")) s.turns.push_back({require_string(t, "question"), require_string(t, "answer")});
  } else {
    s.turns.push_back({require_string(j, "question"), require_string(j, "ground_truth")});
  }
  if (s.turns.empty()) throw InvalidArgument(fmt::format("raw sample '{}' has no turns", s.id));
}

void to_json(Json& j, const RawSample& s) {
  Json turns = Json::array();
  for (const auto& t : s.turns) turns.push_back({{"question", t.question}, {"answer", t.answer}});
  j = Json{{"id", s.id},
           {"image_id", s.image_id},
           {"image_ref", s.image_ref},
           {"data_type", std::string(to_string(s.data_type))},
           {"image_context", s.image_context},
           {"turns", turns}};
  if (s.aspect) j["aspect"] = std::string(to_string(*s.aspect));
}

annotate::Sample SplitSample::to_annotation_sample() const {
  return annotate::Sample{id, aspect, image_ref, image_context, question, ground_truth};
}

void to_json(Json& j, const SplitSample& s) {
  j = Json{{"id", s.id},
           {"source_id", s.source_id},
           {"image_id", s.image_id},
           {"image_ref", s.image_ref},
           {"data_type", std::string(to_string(s.data_type))},
           {"aspect", std::string(to_string(s.aspect))},
           {"image_context", s.image_context},
           {"question", s.question},
           {"ground_truth", s.ground_truth}};
}

void from_json(const Json& j, SplitSample& s) {
  s.id = require_string(j, "id");
  s.source_id = j.value("source_id", s.id);
  s.image_id = require_string(j, "image_id");
  s.image_ref = j.value("image_ref", s.image_id);
  s.data_type = parse_data_type(require_string(j, "data_type"));
  s.aspect = parse_aspect(require_string(j, "aspect"));
  s.image_context = j.value("image_context", "");
  s.question = require_string(j, "question");
  s.ground_truth = require_string(j, "ground_truth");
}

Aspect default_aspect(DataType type) {
  return type == DataType::Adversarial ? Aspect::Harmlessness : Aspect::Helpfulness;
}

void SplitRuleSet::validate() const {
  for (const auto& [type, n] : target_counts) {
    if (n < 0) throw InvalidArgument(fmt::format("target count for {} is negative", to_string(type)));
  }
}

void to_json(Json& j, const SplitRuleSet& r) {
  Json targets = Json::object();
  for (const auto& [type, n] : r.target_counts) targets[std::string(to_string(type))] = n;
  j = Json{{"dedupe_images_in_feedback", r.dedupe_images_in_feedback},
           {"require_visual_dependence", r.require_visual_dependence},
           {"explode_multiturn", r.explode_multiturn},
           {"target_counts", targets}};
}

void from_json(const Json& j, SplitRuleSet& r) {
  r = SplitRuleSet{};
  r.dedupe_images_in_feedback = j.value("dedupe_images_in_feedback", true);
  r.require_visual_dependence = j.value("require_visual_dependence", false);
  r.explode_multiturn = j.value("explode_multiturn", true);
  r.target_counts.clear();
  if (j.contains("target_counts")) {
    for (const auto& [key, n] : j.at("target_counts").items()) r.target_counts[parse_data_type(key)] = n.get<std::int64_t>();
  }
}

InsufficientEligible::InsufficientEligible(DataType type, std::int64_t needed, std::int64_t available)
    : Error(fmt::format("{} feedback target needs {} eligible samples, only {} available", to_string(type), needed,
                        available)),
      needed_(needed),
      available_(available) {}

std::vector<SplitSample> explode(std::span<const RawSample> raw, bool explode_multiturn) {
  std::vector<SplitSample> out;
  for (const auto& r : raw) {
    const std::size_t n = explode_multiturn ? r.turns.size() : std::min<std::size_t>(1, r.turns.size());
    for (std::size_t k = 0; k < n; ++k) {
      SplitSample s;
      s.id = r.turns.size() > 1 && explode_multiturn ? fmt::format("{}#t{}", r.id, k + 1) : r.id;
      s.source_id = r.id;
      s.image_id = r.image_id;
      s.image_ref = r.image_ref.empty() ? r.image_id : r.image_ref;
      s.data_type = r.data_type;
      s.aspect = r.aspect.value_or(default_aspect(r.data_type));
      s.image_context = r.image_context;
      s.question = r.turns[k].question;
      s.ground_truth = r.turns[k].answer;
      out.push_back(std::move(s));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].id == out[i - 1].id) throw InvalidArgument(fmt::format("duplicate sample id '{}'", out[i].id));
  }
  return out;
}

SplitResult build_splits(std::span<const RawSample> raw, const SplitRuleSet& rules, std::uint64_t seed,
                         const VisualDependenceFilter& filter) {
  rules.validate();
  if (rules.require_visual_dependence && !filter) {
    throw InvalidArgument("visual dependence is required but no filter was supplied");
  }
  const auto pool = explode(raw, rules.explode_multiturn);

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<bool> chosen(pool.size(), false);
  std::set<std::string> used_images;
  const auto image_free = [&](std::size_t i) {
    return !rules.dedupe_images_in_feedback || !used_images.contains(pool[i].image_id);
  };

  for (DataType type : {DataType::Conversation, DataType::Reasoning, DataType::Adversarial}) {
    auto it = rules.target_counts.find(type);
    const std::int64_t target = it == rules.target_counts.end() ? 0 : it->second;
    std::int64_t taken = 0;
    std::size_t cursor = 0;
    while (taken < target && cursor < order.size()) {
      // Gather just enough candidates to fill the remaining target, then judge them together.
      std::vector<std::size_t> batch;
      std::set<std::string> batch_images;
      while (cursor < order.size() && static_cast<std::int64_t>(batch.size()) < target - taken) {
        const auto i = order[cursor++];
        if (pool[i].data_type != type || chosen[i] || !image_free(i)) continue;
        if (rules.dedupe_images_in_feedback && !batch_images.insert(pool[i].image_id).second) continue;
        batch.push_back(i);
      }
      std::vector<bool> keep(batch.size(), true);
      if (rules.require_visual_dependence && !batch.empty()) {
        std::vector<SplitSample> view;
        for (auto i : batch) view.push_back(pool[i]);
        keep = filter(view);
        if (keep.size() != batch.size()) throw InvalidArgument("visual dependence filter returned wrong count");
      }
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (!keep[b]) continue;
        chosen[batch[b]] = true;
        used_images.insert(pool[batch[b]].image_id);
        ++taken;
      }
    }
    if (taken < target) throw InsufficientEligible(type, target, taken);
  }

  SplitResult result;
  result.manifest.seed = seed;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto stage = chosen[i] ? Stage::Feedback : Stage::Sft;
    (chosen[i] ? result.feedback : result.sft).push_back(pool[i]);
    ++result.manifest.split_counts[{stage, pool[i].data_type}];
  }
  return result;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> freeze_split_indices(std::size_t pool_size,
                                                                                   std::size_t train_n,
                                                                                   std::size_t test_n,
                                                                                   std::uint64_t seed) {
  if (train_n + test_n != pool_size) {
    throw CountMismatch(fmt::format("train {} + test {} != pool size {}", train_n, test_n, pool_size));
  }
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(train_n), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

}  // namespace nlf::dataset
