#pragma once

/**
 * @file hybrid.hpp
 * @brief Monthly correction model: 12 months of (precipitation, naturalized discharge)
 *        predict the next month's observed mean discharge.
 */

#include "hydroseq/lstm.hpp"
#include "hydroseq/metrics.hpp"
#include "hydroseq/timeseries.hpp"
#include "hydroseq/trainer.hpp"

#include <string>
#include <vector>

namespace hydroseq {

/// Target months whose first day lies in `range`.
bool month_in_range(YearMonth m, const DateRange& range);

/// Train-range monthly moments, separate from the daily statistics.
struct MonthlyNorm {
    Moments precip;
    Moments natural;
    Moments discharge;
};

MonthlyNorm fit_monthly_norm(const MonthlySeries& observed, const MonthlySeries& precip, const MonthlySeries& natural,
                             const DateRange& train_range);

struct MonthlySample {
    WindowSample window;  ///< lookback × 2 normalized inputs, normalized target
    YearMonth target_month;
    double target_m3s = 0.0;
    double proxy_m3s = 0.0;  ///< naturalized discharge of the target month

    auto inputs() const { return window.inputs(); }
};

struct MonthlyOptions {
    std::size_t lookback = 12;
    bool zero_proxy = false;  ///< ablation: naturalized column set to 0 after normalization
};

/**
 * One sample per target month in `range` whose `lookback` preceding months are unmasked in
 * both inputs and whose observed target is unmasked.
 */
std::vector<MonthlySample> build_monthly_samples(const MonthlySeries& observed, const MonthlySeries& precip,
                                                 const MonthlySeries& natural, const DateRange& range,
                                                 const MonthlyNorm& norm, const MonthlyOptions& options = {});

struct HybridModel {
    LstmParams params;
    MonthlyNorm norm;
    std::string station_id;
    std::size_t best_epoch = 0;
    double validation_nse = 0.0;
    std::vector<EpochRecord> history;
};

/// `norm` must be the statistics the samples were built with.
HybridModel train_hybrid(const std::vector<MonthlySample>& train, const std::vector<MonthlySample>& validation,
                         const MonthlyNorm& norm, Eigen::Index hidden, const TrainConfig& cfg);

/// Predictions in m³/s.
std::vector<double> predict_monthly(const LstmParams& params, const MonthlyNorm& norm,
                                    const std::vector<MonthlySample>& samples);

NseResult monthly_nse(const LstmParams& params, const MonthlyNorm& norm, const std::vector<MonthlySample>& samples);

/// NSE of the naturalized proxy itself against the observed targets.
NseResult proxy_nse(const std::vector<MonthlySample>& samples);

}  // namespace hydroseq
