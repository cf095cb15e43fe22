#include "nlf/core/json.hpp"

#include <set>

#include <fmt/format.h>

namespace nlf {

std::string require_string(const Json& j, std::string_view key) {
  auto it = j.find(std::string(key));
  if (it == j.end() || !it->is_string()) {
    throw InvalidArgument(fmt::format("missing string field '{}'", key));
  }
  return it->get<std::string>();
}

void to_json(Json& j, const InteractionTurn& turn) {
  j = Json{{"response", turn.response},
           {"rating", turn.rating.value()},
           {"reason", turn.reason},
           {"critique", turn.critique},
           {"refinement", turn.refinement ? Json(*turn.refinement) : Json(nullptr)}};
}

void from_json(const Json& j, InteractionTurn& turn) {
  turn.response = require_string(j, "response");
  if (!j.contains("rating") || !j.at("rating").is_number_integer()) {
    throw InvalidArgument("turn rating must be an integer");
  }
  turn.rating = Rating(j.at("rating").get<int>());
  turn.reason = require_string(j, "reason");
  turn.critique = require_string(j, "critique");
  if (auto it = j.find("refinement"); it != j.end() && !it->is_null()) {
    turn.refinement = it->get<std::string>();
  } else {
    turn.refinement.reset();
  }
}

void to_json(Json& j, const FeedbackRecord& record) {
  j = Json{{"id", record.id},
           {"aspect", std::string(to_string(record.aspect))},
           {"image_ref", record.image_ref},
           {"image_context", record.image_context},
           {"question", record.question},
           {"ground_truth", record.ground_truth},
           {"turns", record.turns}};
}

void from_json(const Json& j, FeedbackRecord& record) {
  static const std::set<std::string> kKeys = {"id",       "aspect",       "image_ref",
                                              "image_context", "question", "ground_truth",
                                              "turns"};
  if (!j.is_object()) throw InvalidArgument("record must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw InvalidArgument(fmt::format("unexpected record key '{}'", key));
  }
  record.id = require_string(j, "id");
  record.aspect = parse_aspect(require_string(j, "aspect"));
  record.image_ref = require_string(j, "image_ref");
  record.image_context = require_string(j, "image_context");
  record.question = require_string(j, "question");
  record.ground_truth = require_string(j, "ground_truth");
  if (!j.contains("turns") || !j.at("turns").is_array()) {
    throw InvalidArgument("record turns must be an array");
  }
  record.turns = j.at("turns").get<std::vector<InteractionTurn>>();
}

void to_json(Json& j, const DatasetManifest& manifest) {
  Json counts = Json::object();
  for (const auto& [key, n] : manifest.split_counts) {
    counts[std::string(to_string(key.first))][std::string(to_string(key.second))] = n;
  }
  j = Json{{"split_counts", counts},
           {"total", manifest.total()},
           {"seed", manifest.seed},
           {"provider_config_hash", manifest.provider_config_hash},
           {"template_hashes", manifest.template_hashes}};
}

void from_json(const Json& j, DatasetManifest& manifest) {
  manifest = {};
  for (const auto& [stage, row] : j.at("split_counts").items()) {
    for (const auto& [type, n] : row.items()) {
      const auto count = n.get<std::int64_t>();
      if (count < 0) throw InvalidArgument("split counts must be nonnegative");
      manifest.split_counts[{parse_stage(stage), parse_data_type(type)}] = count;
    }
  }
  manifest.seed = j.at("seed").get<std::uint64_t>();
  manifest.provider_config_hash = j.value("provider_config_hash", "");
  manifest.template_hashes =
      j.value("template_hashes", std::map<std::string, std::string>{});
}

}  // namespace nlf
