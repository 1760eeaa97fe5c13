#pragma once

/**
 * @file seasonal.hpp
 * @brief Encoder–decoder LSTM for multi-month discharge forecasts.
 *
 * The encoder consumes the hindcast from a zero state; its final (h, c) seeds the decoder,
 * which reads one forecast-driver row per month. The decoder's head (w_out, b_out) maps
 * each decoder hidden state to a prediction. Predictions are never fed back as inputs.
 */

#include "hydroseq/hybrid.hpp"
#include "hydroseq/lstm.hpp"
#include "hydroseq/timeseries.hpp"
#include "hydroseq/trainer.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace hydroseq {

struct SeasonalSpec {
    std::size_t encoder_length = 12;
    std::size_t horizon = 3;
    std::vector<std::string> encoder_channels = {"precip_mm", "natural_q_m3s", "discharge_m3s"};
    std::vector<std::string> decoder_channels = {"precip_mm"};
    Eigen::Index hidden = 16;

    void validate() const;
};

struct EncoderDecoderParams {
    LstmParams encoder;  ///< head unused (kept zero)
    LstmParams decoder;  ///< head applied at every decoder step

    static EncoderDecoderParams zeros(Eigen::Index hidden, Eigen::Index enc_features, Eigen::Index dec_features);
    Eigen::Index hidden() const { return decoder.hidden(); }
    std::size_t count() const { return encoder.count() + decoder.count(); }
    bool operator==(const EncoderDecoderParams& o) const = default;
};

EncoderDecoderParams init_encoder_decoder(Eigen::Index hidden, Eigen::Index enc_features, Eigen::Index dec_features,
                                          std::uint64_t seed);

/// hindcast: encoder_length × E; drivers: horizon × D. Returns one prediction per horizon step.
Eigen::VectorXd seasonal_forecast(const EncoderDecoderParams& params, const Eigen::Ref<const Eigen::MatrixXd>& hindcast,
                                  const Eigen::Ref<const Eigen::MatrixXd>& drivers);

/// Decoder initial state of a forecast; equals the encoder's final state.
LstmState encoder_final_state(const EncoderDecoderParams& params, const Eigen::Ref<const Eigen::MatrixXd>& hindcast);

struct SeasonalSample {
    std::string station_id;
    YearMonth first_month;     ///< first forecast month
    Eigen::MatrixXd hindcast;  ///< normalized
    Eigen::MatrixXd drivers;   ///< normalized
    Eigen::VectorXd targets;   ///< normalized discharge per horizon step
    Eigen::VectorXd targets_m3s;
};

struct SeasonalGradients {
    double loss = 0.0;
    EncoderDecoderParams grads;
    double grad_norm = 0.0;  ///< before clipping
};

/// Mean squared error over batch and horizon steps, with joint BPTT through decoder then encoder.
SeasonalGradients seasonal_backward(const EncoderDecoderParams& params, std::span<const SeasonalSample* const> batch,
                                    double clip_norm);

/// Predictions (normalized) for a batch, B × horizon.
Eigen::MatrixXd seasonal_predict_batch(const EncoderDecoderParams& params, std::span<const SeasonalSample> batch);

/// Central differences of one sample's loss in long double against the analytic gradient.
double seasonal_grad_check(const EncoderDecoderParams& params, const SeasonalSample& sample, double eps = 1e-5);

/// Long-double scalar recursion, exposed for oracle tests.
std::vector<long double> seasonal_reference(const EncoderDecoderParams& params,
                                            const Eigen::Ref<const Eigen::MatrixXd>& hindcast,
                                            const Eigen::Ref<const Eigen::MatrixXd>& drivers);

/// Monthly series by channel name for one station; `discharge_m3s` is the observed target.
using MonthlyChannels = std::map<std::string, MonthlySeries>;

/// Train-range moments per channel (including the target).
std::map<std::string, Moments> fit_seasonal_norm(const MonthlyChannels& channels, const SeasonalSpec& spec,
                                                 const DateRange& train_range);

/**
 * One sample per forecast origin whose first forecast month lies in `range`, with complete
 * hindcast, drivers and observed targets.
 */
std::vector<SeasonalSample> build_seasonal_samples(const MonthlyChannels& channels, const SeasonalSpec& spec,
                                                   const std::map<std::string, Moments>& norm,
                                                   const DateRange& range);

/// Inputs of a single forecast starting at `first_month`, normalized; throws when incomplete.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> seasonal_inputs(const MonthlyChannels& channels, const SeasonalSpec& spec,
                                                            const std::map<std::string, Moments>& norm,
                                                            YearMonth first_month);

struct SeasonalModel {
    EncoderDecoderParams params;
    SeasonalSpec spec;
    std::map<std::string, Moments> norm;
    std::string station_id;
    std::size_t best_epoch = 0;
    double validation_nse = 0.0;  ///< over all horizon steps pooled
    std::vector<EpochRecord> history;
};

SeasonalModel train_seasonal(const std::vector<SeasonalSample>& train, const std::vector<SeasonalSample>& validation,
                             const SeasonalSpec& spec, const std::map<std::string, Moments>& norm,
                             const TrainConfig& cfg);

/// Forecast in m³/s.
std::vector<double> forecast_m3s(const SeasonalModel& model, const Eigen::Ref<const Eigen::MatrixXd>& hindcast,
                                 const Eigen::Ref<const Eigen::MatrixXd>& drivers);

}  // namespace hydroseq
