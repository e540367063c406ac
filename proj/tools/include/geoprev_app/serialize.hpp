#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include <json.hpp>

#include "geoprev/geodata.hpp"
#include "geoprev/model.hpp"

namespace geoprev::app {

/// A fitted model together with what is needed to rebuild it.
struct StoredModel {
  ModelConfig config;
  std::vector<SurveyRecord> records;
  std::unique_ptr<FittedModel> model;
};

/// model.json: kind, spec block, fitted hyperparameters and training records.
nlohmann::json model_to_json(const ModelConfig& cfg, const FittedModel& model,
                             std::span<const SurveyRecord> records);

/// Rebuilds the fit. GP, FRK and LGM are restored at the stored
/// hyperparameters; the forest is regrown from its seed, which reproduces it
/// exactly.
StoredModel model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const FittedModel& model,
                std::span<const SurveyRecord> records);
StoredModel load_model(const std::filesystem::path& path);

}  // namespace geoprev::app
