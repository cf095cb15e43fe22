#include "nlf/condlm/synthetic.hpp"

#include <cmath>

#include <fmt/format.h>

#include "nlf/core/util.hpp"

namespace nlf::condlm {

void SyntheticSpec::validate() const {
  if (symbols < 2) throw InvalidArgument("synthetic task needs at least 2 symbols");
  if (response_length == 0) throw InvalidArgument("response_length must be > 0");
  if (records == 0) throw InvalidArgument("records must be > 0");
}

SymbolDistribution::SymbolDistribution(std::string prefix, std::size_t size) : prefix_(std::move(prefix)) {
  double z = 0.0;
  for (std::size_t i = 0; i < size; ++i) z += 1.0 / static_cast<double>(i + 1);
  for (std::size_t i = 0; i < size; ++i) {
    symbols_.push_back(fmt::format("{}{}", prefix_, i));
    probs_.push_back(1.0 / static_cast<double>(i + 1) / z);
  }
}

double SymbolDistribution::probability(std::string_view token) const {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i] == token) return probs_[i];
  }
  return 0.0;
}

std::vector<std::string> SymbolDistribution::sample(Rng& rng, std::size_t n) const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n; ++k) {
    double u = rng.uniform();
    std::size_t i = 0;
    while (i + 1 < probs_.size() && (u -= probs_[i]) >= 0.0) ++i;
    out.push_back(symbols_[i]);
  }
  return out;
}

double SymbolDistribution::mean_log_prob(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw InvalidArgument("no tokens to score");
  double sum = 0.0;
  for (const auto& t : tokens) sum += std::log(std::max(probability(t), 1e-6));
  return sum / static_cast<double>(tokens.size());
}

std::vector<std::string> SyntheticTask::bad_prefix() {
  return {serialize::verbalizer_token(Rating(1)), serialize::critique_token(kSyntheticBadCritique)};
}

std::vector<std::string> SyntheticTask::probe_context() const {
  return {"<image>", "k0", "k1", "<question>", "q0", "?"};
}

SyntheticTask make_synthetic_task(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticTask task{SymbolDistribution("g", spec.symbols), SymbolDistribution("b", spec.symbols),
                     SymbolDistribution("c", spec.symbols), {}, {}};
  Rng rng(spec.seed);
  auto context = [&] {
    std::vector<std::string> words;
    for (int i = 0; i < 2; ++i) words.push_back(fmt::format("k{}", rng.below(4)));
    return serialize::detokenize(words);
  };
  for (std::size_t r = 0; r < spec.records; ++r) {
    FeedbackRecord rec;
    rec.id = fmt::format("syn{:05}", r);
    rec.aspect = r % 2 == 0 ? Aspect::Helpfulness : Aspect::Honesty;
    rec.image_ref = fmt::format("img{:05}", r);
    rec.image_context = context();
    rec.question = fmt::format("q{} ?", rng.below(3));
    const auto good = serialize::detokenize(task.good.sample(rng, spec.response_length));
    rec.ground_truth = good;
    rec.turns.push_back({serialize::detokenize(task.bad.sample(rng, spec.response_length)), Rating(1),
                         "every symbol is from the wrong set", std::string(kSyntheticBadCritique),
                         std::string("Use the good symbols.")});
    if (rng.below(2) == 1) {
      auto mixed = task.good.sample(rng, spec.response_length / 2);
      const auto rest = task.bad.sample(rng, spec.response_length - mixed.size());
      mixed.insert(mixed.end(), rest.begin(), rest.end());
      rec.turns.push_back({serialize::detokenize(mixed), Rating(2), "some symbols are from the wrong set",
                           std::string(kSyntheticMixedCritique), std::string("Replace the remaining symbols.")});
    }
    rec.turns.push_back({good, Rating(4), "", std::string(kOptimalCritique), std::nullopt});
    task.records.push_back(std::move(rec));
  }
  for (std::size_t c = 0; c < spec.captions; ++c) {
    auto ctx = context();
    task.captions.push_back({std::move(ctx), serialize::detokenize(task.caption.sample(rng, spec.response_length))});
  }
  return task;
}

}  // namespace nlf::condlm
