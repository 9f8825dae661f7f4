#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdnav/crowd.hpp"
#include "crowdnav/learned_predictor.hpp"
#include "crowdnav/simulation.hpp"

namespace crowdnav {

inline constexpr const char* kConfigSchema = "crowdnav.config/1";

/// Malformed or inconsistent configuration file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a config file can set. Every section is optional; missing keys
/// keep the defaults below.
struct AppConfig {
  SimConfig sim;
  CvPredictorConfig cv;
  ModelShape model_shape;
  TrainingConfig training;
  CrowdGeneratorConfig synthetic;
  LayoutTable layout = LayoutTable::defaults();
  std::vector<ScenarioSpec> scenarios;  // in addition to (or replacing, by name) the built-ins
  std::optional<std::string> model_path;

  /// Built-in scenes with this layout, then custom scenarios; a custom
  /// scenario with a built-in name replaces it in place.
  std::vector<ScenarioSpec> all_scenarios() const;
  /// Throws std::invalid_argument listing the valid names.
  ScenarioSpec scenario(const std::string& name) const;
};

AppConfig parse_config(const nlohmann::json& doc);
AppConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const AppConfig& config);

nlohmann::json sim_config_to_json(const SimConfig& config);
nlohmann::json scenario_to_json(const ScenarioSpec& scenario);

}  // namespace crowdnav
