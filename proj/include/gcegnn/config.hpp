#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gcegnn/eval.hpp"
#include "gcegnn/model.hpp"
#include "gcegnn/train.hpp"

namespace gcegnn::config {

// Every problem found while validating a configuration, reported together.
class ConfigErrors : public std::runtime_error {
 public:
  explicit ConfigErrors(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct RunConfig {
  RunConfig() { model.dropout_global = 0.4; }

  std::uint64_t seed = 42;
  std::string input;
  char delimiter = ',';
  std::string work_dir = "work";

  std::size_t min_item_freq = 5;
  std::size_t min_session_len = 2;
  double test_window_days = 7.0;
  double validation_fraction = 0.1;

  int epsilon = 3;
  std::size_t top_n = 12;

  model::ModelConfig model;  // model.max_length == 0 means "longest prefix in the data"
  train::TrainConfig train;

  std::vector<double> dropout_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  eval::ReportFormat report_format = eval::ReportFormat::table;
};

// Documented keys with their default values, in file order.
nlohmann::ordered_json default_config_json();

// Type- and range-checks `doc` against the documented keys. Missing keys take
// defaults; unknown keys are errors. Throws ConfigErrors listing everything.
RunConfig resolve_config(const nlohmann::json& doc);

// Parses a JSON config file; an empty or whitespace-only file is `{}`.
nlohmann::json read_config_file(const std::filesystem::path& path);
nlohmann::json parse_config_text(std::string_view text);

nlohmann::ordered_json to_json(const RunConfig& config);

// Hash of the resolved configuration without path settings.
std::string fingerprint(const RunConfig& config);

nlohmann::ordered_json model_config_to_json(const model::ModelConfig& config);
model::ModelConfig model_config_from_json(const nlohmann::json& doc);

}  // namespace gcegnn::config
