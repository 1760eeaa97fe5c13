#pragma once

/**
 * @file experiments.hpp
 * @brief Feature-set assembly, training scopes, and daily sequence-to-value experiments.
 */

#include "hydroseq/lstm.hpp"
#include "hydroseq/metrics.hpp"
#include "hydroseq/timeseries.hpp"
#include "hydroseq/trainer.hpp"

#include <map>
#include <string>
#include <vector>

namespace hydroseq {

enum class BaseVariant { PrecipOnly, PrecipPlusDynamic, DynamicPlusStatic };

const char* to_string(BaseVariant v);
BaseVariant parse_base_variant(const std::string& s);

/**
 * Input regime. A non-empty `dam_ids` turns the set into PlusDamRelease(base, dam_ids):
 * one dam-level channel per dam is appended after the base features.
 */
struct FeatureSet {
    BaseVariant base = BaseVariant::PrecipOnly;
    std::vector<std::string> dam_ids;
    std::string precip_channel = "precip_mm";
    std::vector<std::string> dynamic_channels = {"t2m_k", "ssr_jm2", "str_jm2", "tp_mm", "sp_pa"};
    /// Static attributes for DynamicPlusStatic; empty means every attribute in the dataset.
    std::vector<std::string> static_names;

    static FeatureSet plus_dam_release(FeatureSet base, std::vector<std::string> dam_ids);
    bool dam_release() const { return !dam_ids.empty(); }
    std::string name() const;
    bool operator==(const FeatureSet&) const = default;
};

struct FeatureAssembly {
    std::vector<std::string> schema;
    std::map<std::string, Eigen::MatrixXd> matrices;  ///< station_id → days × F
};

/// Resolves the schema against `dataset`; a channel or attribute missing anywhere throws Error naming it.
FeatureAssembly assemble_features(const Dataset& dataset, const FeatureSet& features, bool with_matrices = true);

struct ExperimentSpec {
    std::string name = "experiment";
    FeatureSet features;
    std::vector<std::string> stations;  ///< empty = all stations
    std::size_t sequence_length = 30;
    Eigen::Index hidden_size = 256;
    TrainConfig train;
    SplitSpec split;
    MissingPolicy missing;
    bool log1p_discharge = false;

    void validate() const;
};

struct TrainedModel {
    LstmParams params;
    NormStats norm;
    std::vector<std::string> feature_schema;
    ExperimentSpec spec;
    std::size_t best_epoch = 0;
    double validation_nse = 0.0;
    std::vector<EpochRecord> history;
};

/// Copy of `dataset` holding only `stations` (all when empty). Unknown ids throw Error.
Dataset restrict_stations(const Dataset& dataset, const std::vector<std::string>& stations);

/**
 * Trains on the train-range windows of the in-scope stations of `dataset` (physical units).
 * Normalization is fitted on those stations' train range. Early stopping uses the mean
 * validation NSE in physical units over stations with a defined NSE.
 */
TrainedModel train_model(const ExperimentSpec& spec, const Dataset& dataset);

struct PredictedSeries {
    std::string station_id;
    DateIndex dates;                 ///< the requested range
    std::vector<double> predicted;   ///< m³/s, NaN where no valid window
    std::vector<double> observed;    ///< m³/s, NaN where masked
};

/**
 * Predictions for every in-scope station over `range`. Days without a policy-compliant
 * window or with a masked target stay NaN. `threads` > 1 spreads stations over workers.
 */
std::vector<PredictedSeries> predict_series(const TrainedModel& model, const Dataset& dataset, const DateRange& range,
                                            std::size_t threads = 1);

std::vector<StationScore> score_series(const std::vector<PredictedSeries>& series);
EvalReport evaluate(const TrainedModel& model, const Dataset& dataset, const DateRange& range,
                    std::size_t threads = 1);

}  // namespace hydroseq
