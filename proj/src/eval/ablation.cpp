#include <fmt/format.h>

#include "nlf/eval/harness.hpp"

namespace nlf::eval {

void to_json(Json& j, const AblationConfig& c) {
  std::vector<std::string> aspects;
  for (auto a : c.aspects) aspects.emplace_back(to_string(a));
  j = Json{{"name", c.name},
           {"rlaif_on", c.rlaif_on},
           {"critique_on", c.critique_on},
           {"refinement_on", c.refinement_on},
           {"aspects", aspects}};
}

void from_json(const Json& j, AblationConfig& c) {
  c.name = require_string(j, "name");
  c.rlaif_on = j.value("rlaif_on", true);
  c.critique_on = j.value("critique_on", true);
  c.refinement_on = j.value("refinement_on", true);
  c.aspects.clear();
  for (const auto& a : j.value("aspects", std::vector<std::string>{})) c.aspects.insert(parse_aspect(a));
}

std::vector<AblationConfig> default_ablation_configs() {
  return {
      {"full", true, true, true, {}},
      {"rlaif_off", false, true, true, {}},
      {"critique_off", true, false, true, {}},
      {"refinement_off", true, true, false, {}},
      {"helpfulness_only", true, true, true, {Aspect::Helpfulness}},
      {"honesty_only", true, true, true, {Aspect::Honesty}},
  };
}

void to_json(Json& j, const AblationRow& r) {
  j = Json{{"config", r.config},
           {"sequences", r.sequences},
           {"critique_tokens", r.critique_tokens},
           {"final_loss", r.final_loss},
           {"conditioning_kl", r.conditioning_kl},
           {"good_log_prob", r.good_log_prob},
           {"held_out_regularization", r.held_out_regularization}};
}

std::vector<AblationRow> run_ablation_matrix(std::span<const AblationConfig> configs, const AblationSetup& setup) {
  const auto task = condlm::make_synthetic_task(setup.task);
  auto held_spec = setup.task;
  held_spec.seed = setup.held_out_seed;
  held_spec.records = 1;
  held_spec.captions = setup.held_out_captions;
  const auto held_task = condlm::make_synthetic_task(held_spec);
  std::vector<serialize::TrainingSequence> held_out;
  for (std::size_t i = 0; i < held_task.captions.size(); ++i) {
    held_out.push_back(serialize::serialize_regularization(fmt::format("held{:05}", i),
                                                           held_task.captions[i].image_context,
                                                           held_task.captions[i].caption));
  }

  std::vector<AblationRow> rows;
  for (const auto& cfg : configs) {
    serialize::CorpusOptions opts;
    opts.rlaif_on = cfg.rlaif_on;
    opts.sequence.critique_on = cfg.critique_on;
    opts.sequence.refinement_on = cfg.refinement_on;
    opts.aspects = cfg.aspects;
    const auto corpus = serialize::serialize_corpus(task.records, task.captions, opts);

    AblationRow row;
    row.config = cfg;
    row.sequences = corpus.size();
    for (const auto& s : corpus) {
      for (const auto& t : s.tokens) {
        const auto c = serialize::parse_control(t);
        row.critique_tokens += c && c->kind == serialize::ControlKind::CritiqueOpen ? 1 : 0;
      }
    }
    auto model = condlm::CondLM::build(corpus);
    const auto curve = condlm::train(model, corpus, setup.train);
    row.final_loss = curve.back().value.total;

    // Probe with the prefixes the configuration trains on.
    auto good = serialize::inference_prefix();
    auto bad = condlm::SyntheticTask::bad_prefix();
    if (!cfg.critique_on) {
      good.resize(1);
      bad.resize(1);
    }
    const auto ctx = task.probe_context();
    row.conditioning_kl = condlm::conditioning_kl(model, ctx, good, bad, {}).front();
    auto prefix = ctx;
    prefix.insert(prefix.end(), good.begin(), good.end());
    const auto out = condlm::generate(model, prefix, setup.task.response_length);
    row.good_log_prob = task.good.mean_log_prob(std::span<const std::string>(out).subspan(prefix.size()));
    row.held_out_regularization = condlm::loss(model, held_out, 1.0).regularization;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table_csv(std::span<const AblationRow> rows) {
  std::string out =
      "config,rlaif,critique,refinement,aspects,sequences,critique_tokens,final_loss,conditioning_kl,good_log_prob,"
      "held_out_O_r\n";
  for (const auto& r : rows) {
    std::string aspects;
    for (auto a : r.config.aspects) aspects += (aspects.empty() ? "" : "+") + std::string(to_string(a));
    out += fmt::format("{},{},{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.config.name, r.config.rlaif_on ? "on" : "off",
                       r.config.critique_on ? "on" : "off", r.config.refinement_on ? "on" : "off",
                       aspects.empty() ? "all" : aspects, r.sequences, r.critique_tokens, r.final_loss,
                       r.conditioning_kl, r.good_log_prob, r.held_out_regularization);
  }
  return out;
}

}  // namespace nlf::eval
