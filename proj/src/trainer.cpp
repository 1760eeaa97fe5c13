#include "hydroseq/trainer.hpp"

namespace hydroseq {

FitResult<LstmParams> fit(const LstmParams& init, std::span<const WindowSample> train, const TrainConfig& cfg,
                          const std::function<double(const LstmParams&)>& validate) {
    OptimState optim = OptimState::zeros_like(init);
    auto step = [&](LstmParams& params, std::span<const WindowSample* const> batch) {
        const auto fwd = forward_batch(params, batch);
        const auto res = backward(params, batch, fwd, cfg.grad_clip_norm);
        adam_update(params, res.grads, optim, cfg);
        return res.loss;
    };
    return fit_loop<LstmParams, WindowSample>(init, train, cfg, step, validate);
}

}  // namespace hydroseq
