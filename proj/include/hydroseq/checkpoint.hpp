#pragma once

/**
 * @file checkpoint.hpp
 * @brief JSON encodings of configs, statistics and parameters, and model checkpoints.
 *
 * Parameter blocks are stored as {"rows", "cols", "data"} with `data` in row-major order:
 * wx (4H×F, gate rows i,f,g,o), wh (4H×H), b (4H), w_out (H), b_out. Numbers are written
 * as shortest round-trip decimals, so save/load is lossless.
 */

#include "hydroseq/experiments.hpp"
#include "hydroseq/hybrid.hpp"
#include "hydroseq/seasonal.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <variant>

namespace hydroseq {

inline constexpr int kCheckpointSchemaVersion = 1;

using json = nlohmann::json;

json to_json(const DateRange& r);
DateRange date_range_from_json(const json& j);
json to_json(const SplitSpec& s);
SplitSpec split_from_json(const json& j);
json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys throw.
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});
json to_json(const MissingPolicy& p);
MissingPolicy missing_policy_from_json(const json& j);
json to_json(const Moments& m);
Moments moments_from_json(const json& j);
json to_json(const NormStats& s);
NormStats norm_stats_from_json(const json& j);
json to_json(const FeatureSet& f);
FeatureSet feature_set_from_json(const json& j);
json to_json(const ExperimentSpec& s);
ExperimentSpec experiment_spec_from_json(const json& j);
json to_json(const LstmParams& p);
LstmParams lstm_params_from_json(const json& j);
json to_json(const SeasonalSpec& s);
SeasonalSpec seasonal_spec_from_json(const json& j);
json to_json(const std::vector<EpochRecord>& history);

json checkpoint_json(const TrainedModel& m);
json checkpoint_json(const HybridModel& m);
json checkpoint_json(const SeasonalModel& m);

using AnyModel = std::variant<TrainedModel, HybridModel, SeasonalModel>;

/// Parses any checkpoint kind. Throws Error on version, shape or schema inconsistencies.
AnyModel model_from_json(const json& j);

void save_checkpoint(const std::filesystem::path& path, const json& checkpoint);
AnyModel load_checkpoint(const std::filesystem::path& path);
/// Loads a daily model and checks its schema against `expected_schema` when non-empty.
TrainedModel load_daily_checkpoint(const std::filesystem::path& path,
                                   const std::vector<std::string>& expected_schema = {});

}  // namespace hydroseq
