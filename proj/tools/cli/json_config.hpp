#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

namespace cseg::cli {

/// Reads a flat JSON object whose keys are long flag names ("time-limit" or
/// "time_limit"). Values may be strings, numbers, booleans or arrays of those;
/// null entries are skipped. Throws CLI::ConfigError on malformed input.
inline std::vector<CLI::ConfigItem> read_config_items(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CLI::ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw CLI::ConfigError("config file must hold a JSON object");
  auto scalar = [](const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConfigError("config values must be scalars or arrays of scalars");
  };
  std::vector<CLI::ConfigItem> items;
  for (const auto& [key, v] : j.items()) {
    if (v.is_null()) continue;
    CLI::ConfigItem item;
    item.name = key;
    std::replace(item.name.begin(), item.name.end(), '_', '-');
    if (v.is_array()) {
      for (const auto& e : v) item.inputs.push_back(scalar(e));
    } else {
      item.inputs.push_back(scalar(v));
    }
    items.push_back(std::move(item));
  }
  return items;
}

/// Fills options of `sub` that were not given on the command line from the
/// JSON file, running each option's validators. Unknown keys are ignored.
inline void apply_config_file(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  for (const auto& item : read_config_items(in)) {
    if (item.name == "config") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr || opt->count() > 0) continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

}  // namespace cseg::cli
