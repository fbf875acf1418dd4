#include "orgseg/config.hpp"

#include "orgseg/error.hpp"

namespace orgseg {
using nlohmann::json;

void apply_overrides(json& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::ConfigValidationError, item + ": expected key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json* node = &config;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) throw Error(ErrorKind::ConfigValidationError, key + ": unknown key");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    *node = std::move(value);
  }
}

void check_known_keys(const json& config, const json& defaults, const std::string& prefix) {
  if (!config.is_object()) return;
  for (const auto& [key, value] : config.items()) {
    if (!defaults.contains(key)) throw Error(ErrorKind::ConfigValidationError, prefix + key + ": unknown key");
    const json& d = defaults.at(key);
    if (value.is_object() && d.is_object() && !d.empty()) check_known_keys(value, d, prefix + key + ".");
  }
}

json merged(json base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) return patch;
  for (const auto& [key, value] : patch.items()) {
    base[key] = base.contains(key) ? merged(base[key], value) : value;
  }
  return base;
}

}  // namespace orgseg
