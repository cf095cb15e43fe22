#pragma once

#include <json.hpp>

#include "nlf/core/types.hpp"

namespace nlf {

using Json = nlohmann::json;

void to_json(Json& j, const InteractionTurn& turn);
void from_json(const Json& j, InteractionTurn& turn);

/// Record schema: keys exactly id, aspect, image_ref, image_context, question,
/// ground_truth, turns. Unknown or missing keys are rejected.
void to_json(Json& j, const FeedbackRecord& record);
void from_json(const Json& j, FeedbackRecord& record);

void to_json(Json& j, const DatasetManifest& manifest);
void from_json(const Json& j, DatasetManifest& manifest);

/// Fetches a required string member, with a message naming the key on failure.
std::string require_string(const Json& j, std::string_view key);

}  // namespace nlf
