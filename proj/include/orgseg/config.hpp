#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace orgseg {

/// Applies `key=value` overrides to a JSON config. Keys use dots for nesting
/// and must already exist; values are parsed as JSON, falling back to a
/// plain string. Throws ConfigValidationError naming the key.
void apply_overrides(nlohmann::json& config, const std::vector<std::string>& overrides);

/// Rejects keys of `config` that are absent from `defaults`, recursively
/// through nested objects.
void check_known_keys(const nlohmann::json& config, const nlohmann::json& defaults, const std::string& prefix = {});

/// Recursively overlays `patch` onto `base`.
nlohmann::json merged(nlohmann::json base, const nlohmann::json& patch);

}  // namespace orgseg
