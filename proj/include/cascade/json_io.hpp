#pragma once

// nlohmann/json bindings for types embedded in other documents
// (corpus lines, pattern files, result lines).

#include "cascade/extractor.hpp"

#include <json.hpp>

namespace cascade {

nlohmann::ordered_json to_json_value(const LogicItem& item);
nlohmann::ordered_json to_json_value(const ExtractedLogic& logic);
LogicItem logic_item_from_json(const nlohmann::json& j);
ExtractedLogic logic_from_json_value(const nlohmann::json& j);

} // namespace cascade
