#pragma once

/**
 * @file trainer.hpp
 * @brief Mini-batch training loop with epoch-wise reshuffling and early stopping.
 */

#include "hydroseq/error.hpp"
#include "hydroseq/lstm.hpp"
#include "hydroseq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace hydroseq {

struct EpochRecord {
    std::size_t epoch = 0;  ///< 1-based
    double train_loss = 0.0;
    double validation_score = 0.0;  ///< NaN when undefined
};

template <typename Params>
struct FitResult {
    Params params;  ///< parameters at the best validation epoch
    std::size_t best_epoch = 0;
    double best_score = 0.0;
    std::vector<EpochRecord> history;
};

/// Epoch `epoch`'s visiting order of `n` samples.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 gen(derive_seed(seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), gen);
    return order;
}

/**
 * Generic loop. `step(params, batch)` computes the batch loss, updates `params` in place
 * and returns the loss; `validate(params)` returns a score where higher is better
 * (NaN = undefined). Stops after `cfg.patience` epochs without improvement.
 */
template <typename Params, typename Sample, typename Step, typename Validate>
FitResult<Params> fit_loop(Params params, std::span<const Sample> train, const TrainConfig& cfg, Step&& step,
                           Validate&& validate) {
    cfg.validate();
    if (train.empty()) throw Error("no training samples");
    FitResult<Params> out;
    out.best_score = -std::numeric_limits<double>::infinity();
    bool have_best = false;
    std::size_t since_best = 0;
    std::vector<const Sample*> batch;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto order = epoch_order(train.size(), cfg.seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            batch.clear();
            for (std::size_t k = 0; k < n; ++k) batch.push_back(&train[order[start + k]]);
            loss_sum += step(params, std::span<const Sample* const>(batch)) * static_cast<double>(n);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        rec.validation_score = validate(params);
        out.history.push_back(rec);
        if (!std::isfinite(rec.train_loss)) throw Error("training diverged (non-finite loss)");

        if (std::isfinite(rec.validation_score) && (!have_best || rec.validation_score > out.best_score)) {
            have_best = true;
            out.best_score = rec.validation_score;
            out.best_epoch = epoch;
            out.params = params;
            since_best = 0;
        } else if (++since_best >= cfg.patience && have_best) {
            break;
        }
    }
    if (!have_best) throw Error("validation score undefined in every epoch");
    return out;
}

/// Sequence-to-value LSTM training with Adam and global-norm clipping.
FitResult<LstmParams> fit(const LstmParams& init, std::span<const WindowSample> train, const TrainConfig& cfg,
                          const std::function<double(const LstmParams&)>& validate);

}  // namespace hydroseq
