#pragma once

// Internal nlohmann::json converters shared by config parsing and checkpoint
// metadata. Not installed; public headers stay json-free.

#include <nlohmann/json.hpp>

#include "vrfm/distributions.hpp"
#include "vrfm/models.hpp"
#include "vrfm/training.hpp"

namespace vrfm {

using Json = nlohmann::json;

/// Rejects keys outside `allowed`; the error names the offending key path.
void check_keys(const Json& obj, const std::vector<std::string>& allowed,
                const std::string& path);

/// Reads obj[key] into out if present (type-checked via get_to).
template <typename T>
void read_field(const Json& obj, const char* key, T& out, const std::string& path) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid value: ") + e.what(),
                      path.empty() ? key : path + "." + key);
  }
}

Json velocity_config_to_json(const VelocityModelConfig& cfg);
VelocityModelConfig velocity_config_from_json(const Json& j, const std::string& path);

Json posterior_config_to_json(const PosteriorConfig& cfg);
PosteriorConfig posterior_config_from_json(const Json& j, const std::string& path);

Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, const std::string& path);

Json distribution_to_json(const DistributionSpec& spec);
DistributionSpec distribution_from_json(const Json& j, const std::string& path);

Json losses_to_json(const LossBreakdown& l);
LossBreakdown losses_from_json(const Json& j);

}  // namespace vrfm
