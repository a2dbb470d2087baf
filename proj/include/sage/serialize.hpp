#pragma once

#include <json.hpp>

#include "sage/data.hpp"
#include "sage/model.hpp"
#include "sage/style_align.hpp"
#include "sage/train.hpp"

namespace sage {

using json = nlohmann::json;

// Required-field accessor: throws ConfigError naming the missing field.
const json& require_field(const json& j, const std::string& key, const std::string& context);

json to_json(const StyleAlignConfig& cfg);
StyleAlignConfig style_config_from_json(const json& j);

json to_json(const ExtractorSpec& spec);
ExtractorSpec extractor_spec_from_json(const json& j);

json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const json& j);

json to_json(const AblationSwitches& sw);
AblationSwitches ablation_from_json(const json& j);

json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

}  // namespace sage
