#pragma once

#include <json.hpp>

#include "riot/core_types.hpp"
#include "riot/kernel_cost.hpp"

namespace riot {

nlohmann::json to_json(const HyperParams& params);
nlohmann::json to_json(const KernelSpec& kernel);

/// Overlays the keys present in doc onto base. Unknown keys and wrongly
/// typed values raise InvalidInput naming the key.
HyperParams hyper_params_from_json(const nlohmann::json& doc, HyperParams base = {});
KernelSpec kernel_spec_from_json(const nlohmann::json& doc, KernelSpec base = {});

}  // namespace riot
