#pragma once

/**
 * @file lstm.hpp
 * @brief Single-layer LSTM with a linear head: forward pass, BPTT, Adam, gradient check.
 *
 * Gate layout: the 4H rows of `wx`, `wh` and `b` are stacked as [input, forget, cell, output]
 * blocks of H rows each. Cell update:
 *
 *     i = σ(z_i), f = σ(z_f), g = tanh(z_g), o = σ(z_o),   z = wx·x + wh·h + b
 *     c' = f ⊙ c + i ⊙ g
 *     h' = o ⊙ tanh(c')
 *
 * The sequence-to-value head is `w_out · h_L + b_out`.
 */

#include "hydroseq/timeseries.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace hydroseq {

enum Gate : Eigen::Index { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };

struct LstmParams {
    Eigen::MatrixXd wx;     ///< 4H × F
    Eigen::MatrixXd wh;     ///< 4H × H
    Eigen::VectorXd b;      ///< 4H
    Eigen::VectorXd w_out;  ///< H
    double b_out = 0.0;

    static LstmParams zeros(Eigen::Index hidden, Eigen::Index features);

    Eigen::Index hidden() const { return w_out.size(); }
    Eigen::Index features() const { return wx.cols(); }
    std::size_t count() const;
    bool all_finite() const;

    /// Contiguous storage of each parameter block (wx, wh, b, w_out, b_out).
    std::array<std::span<double>, 5> blocks();
    std::array<std::span<const double>, 5> blocks() const;

    bool operator==(const LstmParams& o) const;
};

/// Gradients share the parameter layout.
using Gradients = LstmParams;

struct LstmState {
    Eigen::VectorXd h;
    Eigen::VectorXd c;

    static LstmState zeros(Eigen::Index hidden);
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    double grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    AdamConfig adam;

    void validate() const;
};

struct OptimState {
    Gradients m;
    Gradients v;
    std::uint64_t t = 0;

    static OptimState zeros_like(const LstmParams& p);
};

/// Uniform(-1/√H, 1/√H) weights, zero biases except the forget gate (1.0).
LstmParams init_params(Eigen::Index hidden, Eigen::Index features, std::uint64_t seed);

LstmState cell_step(const LstmParams& params, const Eigen::Ref<const Eigen::VectorXd>& x, const LstmState& state);

/**
 * Activations recorded by a batched forward pass. Column b of every matrix belongs to
 * batch member b; step t holds the state after consuming input t.
 */
struct SequenceTrace {
    std::vector<Eigen::MatrixXd> x;       ///< F × B inputs
    std::vector<Eigen::MatrixXd> gates;   ///< 4H × B activated gates (i, f, g, o)
    std::vector<Eigen::MatrixXd> c;       ///< H × B cell state
    std::vector<Eigen::MatrixXd> tanh_c;  ///< H × B
    std::vector<Eigen::MatrixXd> h;       ///< H × B hidden state
    Eigen::MatrixXd h0;                   ///< initial state
    Eigen::MatrixXd c0;

    std::size_t steps() const { return x.size(); }
    const Eigen::MatrixXd& h_before(std::size_t t) const { return t == 0 ? h0 : h[t - 1]; }
    const Eigen::MatrixXd& c_before(std::size_t t) const { return t == 0 ? c0 : c[t - 1]; }
};

/// Runs the recurrence over `x` (one F×B matrix per step) from (h0, c0).
SequenceTrace run_sequence(const LstmParams& params, std::vector<Eigen::MatrixXd> x, const Eigen::MatrixXd& h0,
                           const Eigen::MatrixXd& c0);

/**
 * Reverse pass through a recorded sequence.
 *
 * `dh_step[t]` is the external loss gradient arriving at h_t (may be empty, meaning zero
 * everywhere); `dh_last`/`dc_last` add to the last step. Recurrent-weight and bias gradients
 * are accumulated into `grads` (head entries untouched). The gradient with respect to the
 * initial state is written to `dh0`/`dc0` when given.
 */
void backprop_sequence(const LstmParams& params, const SequenceTrace& trace,
                       const std::vector<Eigen::MatrixXd>& dh_step, const Eigen::MatrixXd& dh_last,
                       const Eigen::MatrixXd& dc_last, Gradients& grads, Eigen::MatrixXd* dh0 = nullptr,
                       Eigen::MatrixXd* dc0 = nullptr);

struct SequenceForward {
    double prediction = 0.0;
    SequenceTrace trace;
};

/// Zero initial state, head on the final hidden state.
SequenceForward forward_seq(const LstmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

struct BatchForward {
    Eigen::VectorXd predictions;
    SequenceTrace trace;
};

BatchForward forward_batch(const LstmParams& params, std::span<const WindowSample> batch);
BatchForward forward_batch(const LstmParams& params, std::span<const WindowSample* const> batch);

/// Batch predictions without retaining a trace.
Eigen::VectorXd predict_batch(const LstmParams& params, std::span<const WindowSample> samples,
                              std::size_t chunk = 512);

double mse_loss(std::span<const double> predictions, std::span<const double> targets);

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
    double grad_norm = 0.0;  ///< global L2 norm before clipping
};

/**
 * Exact gradient of the batch MSE, then global-norm clipping to `clip_norm`
 * (pass +inf to disable). `forward` must come from `forward_batch` on the same batch.
 */
BackwardResult backward(const LstmParams& params, std::span<const WindowSample> batch, const BatchForward& forward,
                        double clip_norm);
BackwardResult backward(const LstmParams& params, std::span<const WindowSample* const> batch,
                        const BatchForward& forward, double clip_norm);

double global_norm(const Gradients& g);
/// Rescales `g` in place so its global norm is at most `clip_norm`. Returns the pre-clip norm.
double clip_global_norm(Gradients& g, double clip_norm);

/// Bias-corrected Adam, in place.
void adam_update(LstmParams& params, const Gradients& grads, OptimState& state, const TrainConfig& cfg);
std::pair<LstmParams, OptimState> adam_step(const LstmParams& params, const Gradients& grads,
                                            const OptimState& state, const TrainConfig& cfg);

/**
 * Central-difference check of the analytic gradient on a single sample's squared error.
 *
 * The numerical side runs an independent scalar forward pass in long double. Returns
 * max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
 */
double grad_check(const LstmParams& params, const WindowSample& sample, double eps = 1e-5);

/// Long-double scalar forward pass; exposed for oracle tests.
long double reference_prediction(const LstmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

void check_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what);

}  // namespace hydroseq
