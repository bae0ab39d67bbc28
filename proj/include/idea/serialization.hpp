#pragma once

// nlohmann::json bindings for the configuration types.

#include <json.hpp>

#include "idea/hypersearch.hpp"
#include "idea/idea_core.hpp"
#include "idea/tidea.hpp"

namespace idea {

void to_json(nlohmann::json& j, const FusionConfig& c);
void from_json(const nlohmann::json& j, FusionConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);

}  // namespace idea
