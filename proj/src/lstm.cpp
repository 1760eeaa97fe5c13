#include "hydroseq/lstm.hpp"

#include "hydroseq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace hydroseq {

namespace {

void sigmoid_inplace(Eigen::Block<Eigen::MatrixXd> z) {
    z = (1.0 + (-z.array()).exp()).inverse();
}

void tanh_inplace(Eigen::Block<Eigen::MatrixXd> z) { z = z.array().tanh(); }

}  // namespace

void check_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
    if (!m.allFinite()) throw Error(std::string("non-finite ") + what);
}

// ---- parameters -----------------------------------------------------------

LstmParams LstmParams::zeros(Eigen::Index hidden, Eigen::Index features) {
    if (hidden < 1 || features < 1) throw Error("LSTM needs H >= 1 and F >= 1");
    LstmParams p;
    p.wx = Eigen::MatrixXd::Zero(4 * hidden, features);
    p.wh = Eigen::MatrixXd::Zero(4 * hidden, hidden);
    p.b = Eigen::VectorXd::Zero(4 * hidden);
    p.w_out = Eigen::VectorXd::Zero(hidden);
    p.b_out = 0.0;
    return p;
}

std::size_t LstmParams::count() const {
    return static_cast<std::size_t>(wx.size() + wh.size() + b.size() + w_out.size() + 1);
}

bool LstmParams::all_finite() const {
    return wx.allFinite() && wh.allFinite() && b.allFinite() && w_out.allFinite() && std::isfinite(b_out);
}

std::array<std::span<double>, 5> LstmParams::blocks() {
    return {std::span<double>(wx.data(), static_cast<std::size_t>(wx.size())),
            std::span<double>(wh.data(), static_cast<std::size_t>(wh.size())),
            std::span<double>(b.data(), static_cast<std::size_t>(b.size())),
            std::span<double>(w_out.data(), static_cast<std::size_t>(w_out.size())), std::span<double>(&b_out, 1)};
}

std::array<std::span<const double>, 5> LstmParams::blocks() const {
    return {std::span<const double>(wx.data(), static_cast<std::size_t>(wx.size())),
            std::span<const double>(wh.data(), static_cast<std::size_t>(wh.size())),
            std::span<const double>(b.data(), static_cast<std::size_t>(b.size())),
            std::span<const double>(w_out.data(), static_cast<std::size_t>(w_out.size())),
            std::span<const double>(&b_out, 1)};
}

bool LstmParams::operator==(const LstmParams& o) const {
    return wx.rows() == o.wx.rows() && wx.cols() == o.wx.cols() && wh.cols() == o.wh.cols() && wx == o.wx &&
           wh == o.wh && b == o.b && w_out == o.w_out && b_out == o.b_out;
}

LstmState LstmState::zeros(Eigen::Index hidden) {
    return {Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden)};
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (patience < 1) throw Error("patience must be >= 1");
    if (max_epochs < 1) throw Error("max_epochs must be >= 1");
    if (!(grad_clip_norm > 0.0)) throw Error("grad_clip_norm must be > 0");
}

OptimState OptimState::zeros_like(const LstmParams& p) {
    OptimState s;
    s.m = LstmParams::zeros(p.hidden(), p.features());
    s.v = s.m;
    return s;
}

LstmParams init_params(Eigen::Index hidden, Eigen::Index features, std::uint64_t seed) {
    LstmParams p = LstmParams::zeros(hidden, features);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::mt19937_64 gen(derive_seed(seed, "lstm-init"));
    std::uniform_real_distribution<double> u(-bound, bound);
    // fixed fill order: wx then wh then w_out, each column-major
    for (double& w : p.blocks()[0]) w = u(gen);
    for (double& w : p.blocks()[1]) w = u(gen);
    for (double& w : p.blocks()[3]) w = u(gen);
    p.b.segment(kForget * hidden, hidden).setOnes();
    return p;
}

// ---- forward --------------------------------------------------------------

LstmState cell_step(const LstmParams& params, const Eigen::Ref<const Eigen::VectorXd>& x, const LstmState& state) {
    const Eigen::Index H = params.hidden();
    if (x.size() != params.features() || state.h.size() != H || state.c.size() != H) {
        throw Error("cell_step: shape mismatch");
    }
    check_finite(x, "cell input");
    check_finite(state.h, "hidden state");
    check_finite(state.c, "cell state");
    Eigen::VectorXd z = params.wx * x + params.wh * state.h + params.b;
    const auto i = (1.0 + (-z.segment(kInput * H, H).array()).exp()).inverse();
    const auto f = (1.0 + (-z.segment(kForget * H, H).array()).exp()).inverse();
    const auto g = z.segment(kCell * H, H).array().tanh();
    const auto o = (1.0 + (-z.segment(kOutput * H, H).array()).exp()).inverse();
    LstmState next;
    next.c = (f * state.c.array() + i * g).matrix();
    next.h = (o * next.c.array().tanh()).matrix();
    return next;
}

SequenceTrace run_sequence(const LstmParams& params, std::vector<Eigen::MatrixXd> x, const Eigen::MatrixXd& h0,
                           const Eigen::MatrixXd& c0) {
    const Eigen::Index H = params.hidden();
    SequenceTrace tr;
    tr.h0 = h0;
    tr.c0 = c0;
    tr.x = std::move(x);
    const std::size_t L = tr.x.size();
    tr.gates.resize(L);
    tr.c.resize(L);
    tr.tanh_c.resize(L);
    tr.h.resize(L);
    for (std::size_t t = 0; t < L; ++t) {
        const Eigen::MatrixXd& hp = tr.h_before(t);
        const Eigen::MatrixXd& cp = tr.c_before(t);
        Eigen::MatrixXd& z = tr.gates[t];
        z.noalias() = params.wx * tr.x[t];
        z.noalias() += params.wh * hp;
        z.colwise() += params.b;
        sigmoid_inplace(z.middleRows(0, 2 * H));
        tanh_inplace(z.middleRows(kCell * H, H));
        sigmoid_inplace(z.middleRows(kOutput * H, H));
        tr.c[t] = z.middleRows(kForget * H, H).cwiseProduct(cp) +
                  z.middleRows(kInput * H, H).cwiseProduct(z.middleRows(kCell * H, H));
        tr.tanh_c[t] = tr.c[t].array().tanh();
        tr.h[t] = z.middleRows(kOutput * H, H).cwiseProduct(tr.tanh_c[t]);
    }
    return tr;
}

namespace {

template <typename SampleRef>
std::vector<Eigen::MatrixXd> gather_steps(std::span<const SampleRef> batch, Eigen::Index features,
                                          const auto& get) {
    if (batch.empty()) throw Error("empty batch");
    const Eigen::Index L = get(batch[0]).length;
    const auto B = static_cast<Eigen::Index>(batch.size());
    std::vector<Eigen::MatrixXd> x(static_cast<std::size_t>(L), Eigen::MatrixXd(features, B));
    for (Eigen::Index bi = 0; bi < B; ++bi) {
        const WindowSample& s = get(batch[static_cast<std::size_t>(bi)]);
        if (s.length != L || s.frame->cols() != features) throw Error("batch members differ in shape");
        const auto in = s.inputs();
        for (Eigen::Index t = 0; t < L; ++t) x[static_cast<std::size_t>(t)].col(bi) = in.row(t).transpose();
    }
    for (const auto& m : x) check_finite(m, "sequence input");
    return x;
}

template <typename SampleRef>
BatchForward forward_impl(const LstmParams& params, std::span<const SampleRef> batch, const auto& get) {
    auto x = gather_steps(batch, params.features(), get);
    const auto B = static_cast<Eigen::Index>(batch.size());
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(params.hidden(), B);
    BatchForward out;
    out.trace = run_sequence(params, std::move(x), zero, zero);
    out.predictions = (params.w_out.transpose() * out.trace.h.back()).transpose();
    out.predictions.array() += params.b_out;
    return out;
}

template <typename SampleRef>
BackwardResult backward_impl(const LstmParams& params, std::span<const SampleRef> batch, const BatchForward& fwd,
                             double clip_norm, const auto& get) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    if (B == 0 || fwd.predictions.size() != B) throw Error("backward: trace does not match batch");
    BackwardResult out;
    out.grads = LstmParams::zeros(params.hidden(), params.features());

    Eigen::VectorXd resid(B);
    for (Eigen::Index bi = 0; bi < B; ++bi) resid(bi) = fwd.predictions(bi) - get(batch[static_cast<std::size_t>(bi)]).target;
    out.loss = resid.squaredNorm() / static_cast<double>(B);
    const Eigen::VectorXd dpred = resid * (2.0 / static_cast<double>(B));

    const Eigen::MatrixXd& hl = fwd.trace.h.back();
    out.grads.w_out.noalias() = hl * dpred;
    out.grads.b_out = dpred.sum();
    const Eigen::MatrixXd dh_last = params.w_out * dpred.transpose();
    const Eigen::MatrixXd dc_last = Eigen::MatrixXd::Zero(params.hidden(), B);
    backprop_sequence(params, fwd.trace, {}, dh_last, dc_last, out.grads);
    out.grad_norm = clip_global_norm(out.grads, clip_norm);
    return out;
}

const auto by_value = [](const WindowSample& s) -> const WindowSample& { return s; };
const auto by_pointer = [](const WindowSample* s) -> const WindowSample& { return *s; };

}  // namespace

SequenceForward forward_seq(const LstmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
    if (inputs.rows() < 1) throw Error("forward_seq: sequence length must be >= 1");
    if (inputs.cols() != params.features()) throw Error("forward_seq: feature count mismatch");
    check_finite(inputs, "sequence input");
    std::vector<Eigen::MatrixXd> x(static_cast<std::size_t>(inputs.rows()));
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) x[static_cast<std::size_t>(t)] = inputs.row(t).transpose();
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(params.hidden(), 1);
    SequenceForward out;
    out.trace = run_sequence(params, std::move(x), zero, zero);
    out.prediction = params.w_out.dot(out.trace.h.back().col(0)) + params.b_out;
    return out;
}

BatchForward forward_batch(const LstmParams& params, std::span<const WindowSample> batch) {
    return forward_impl(params, batch, by_value);
}

BatchForward forward_batch(const LstmParams& params, std::span<const WindowSample* const> batch) {
    return forward_impl(params, batch, by_pointer);
}

Eigen::VectorXd predict_batch(const LstmParams& params, std::span<const WindowSample> samples, std::size_t chunk) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t start = 0; start < samples.size(); start += chunk) {
        const std::size_t n = std::min(chunk, samples.size() - start);
        const auto fwd = forward_batch(params, samples.subspan(start, n));
        out.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = fwd.predictions;
    }
    return out;
}

double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) throw Error("mse_loss: length mismatch");
    if (predictions.empty()) throw Error("mse_loss: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double r = predictions[i] - targets[i];
        s += r * r;
    }
    return s / static_cast<double>(predictions.size());
}

// ---- backward -------------------------------------------------------------

void backprop_sequence(const LstmParams& params, const SequenceTrace& trace,
                       const std::vector<Eigen::MatrixXd>& dh_step, const Eigen::MatrixXd& dh_last,
                       const Eigen::MatrixXd& dc_last, Gradients& grads, Eigen::MatrixXd* dh0, Eigen::MatrixXd* dc0) {
    const Eigen::Index H = params.hidden();
    const std::size_t L = trace.steps();
    Eigen::MatrixXd dh = dh_last;
    Eigen::MatrixXd dc = dc_last;
    Eigen::MatrixXd dz(4 * H, dh.cols());
    for (std::size_t k = L; k-- > 0;) {
        if (!dh_step.empty() && dh_step[k].size() > 0) dh += dh_step[k];
        const Eigen::MatrixXd& gt = trace.gates[k];
        const auto i = gt.middleRows(kInput * H, H).array();
        const auto f = gt.middleRows(kForget * H, H).array();
        const auto g = gt.middleRows(kCell * H, H).array();
        const auto o = gt.middleRows(kOutput * H, H).array();
        const auto tc = trace.tanh_c[k].array();

        dc.array() += dh.array() * o * (1.0 - tc * tc);
        dz.middleRows(kOutput * H, H) = (dh.array() * tc * o * (1.0 - o)).matrix();
        dz.middleRows(kInput * H, H) = (dc.array() * g * i * (1.0 - i)).matrix();
        dz.middleRows(kCell * H, H) = (dc.array() * i * (1.0 - g * g)).matrix();
        dz.middleRows(kForget * H, H) = (dc.array() * trace.c_before(k).array() * f * (1.0 - f)).matrix();

        grads.wx.noalias() += dz * trace.x[k].transpose();
        grads.wh.noalias() += dz * trace.h_before(k).transpose();
        grads.b += dz.rowwise().sum();

        dc = (dc.array() * f).matrix();
        dh.noalias() = params.wh.transpose() * dz;
    }
    if (dh0) *dh0 = dh;
    if (dc0) *dc0 = dc;
}

BackwardResult backward(const LstmParams& params, std::span<const WindowSample> batch, const BatchForward& forward,
                        double clip_norm) {
    return backward_impl(params, batch, forward, clip_norm, by_value);
}

BackwardResult backward(const LstmParams& params, std::span<const WindowSample* const> batch,
                        const BatchForward& forward, double clip_norm) {
    return backward_impl(params, batch, forward, clip_norm, by_pointer);
}

double global_norm(const Gradients& g) {
    double s = 0.0;
    for (const auto& blk : g.blocks())
        for (double v : blk) s += v * v;
    return std::sqrt(s);
}

double clip_global_norm(Gradients& g, double clip_norm) {
    const double norm = global_norm(g);
    if (std::isfinite(clip_norm) && norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto& blk : g.blocks())
            for (double& v : blk) v *= scale;
    }
    return norm;
}

// ---- Adam -----------------------------------------------------------------

void adam_update(LstmParams& params, const Gradients& grads, OptimState& state, const TrainConfig& cfg) {
    if (grads.hidden() != params.hidden() || grads.features() != params.features() ||
        state.m.hidden() != params.hidden() || state.m.features() != params.features()) {
        throw Error("adam_step: shape mismatch");
    }
    state.t += 1;
    const double b1 = cfg.adam.beta1;
    const double b2 = cfg.adam.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    auto p = params.blocks();
    auto g = grads.blocks();
    auto m = state.m.blocks();
    auto v = state.v.blocks();
    for (std::size_t k = 0; k < p.size(); ++k) {
        for (std::size_t j = 0; j < p[k].size(); ++j) {
            m[k][j] = b1 * m[k][j] + (1.0 - b1) * g[k][j];
            v[k][j] = b2 * v[k][j] + (1.0 - b2) * g[k][j] * g[k][j];
            const double mhat = m[k][j] / c1;
            const double vhat = v[k][j] / c2;
            p[k][j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam.epsilon);
        }
    }
}

std::pair<LstmParams, OptimState> adam_step(const LstmParams& params, const Gradients& grads,
                                            const OptimState& state, const TrainConfig& cfg) {
    std::pair<LstmParams, OptimState> out{params, state};
    adam_update(out.first, grads, out.second, cfg);
    return out;
}

// ---- finite-difference oracle ---------------------------------------------

namespace {

/// Flat long-double copy of the parameters in block order (wx, wh, b, w_out, b_out; column-major).
struct WideParams {
    Eigen::Index H = 0;
    Eigen::Index F = 0;
    std::vector<long double> v;

    explicit WideParams(const LstmParams& p) : H(p.hidden()), F(p.features()) {
        for (const auto& blk : p.blocks())
            for (double x : blk) v.push_back(x);
    }
    long double wx(Eigen::Index r, Eigen::Index c) const { return v[static_cast<std::size_t>(c * 4 * H + r)]; }
    long double wh(Eigen::Index r, Eigen::Index c) const {
        return v[static_cast<std::size_t>(4 * H * F + c * 4 * H + r)];
    }
    long double b(Eigen::Index r) const { return v[static_cast<std::size_t>(4 * H * F + 4 * H * H + r)]; }
    long double w_out(Eigen::Index r) const { return v[static_cast<std::size_t>(4 * H * F + 4 * H * H + 4 * H + r)]; }
    long double b_out() const { return v.back(); }
};

long double wide_sigmoid(long double z) { return 1.0L / (1.0L + std::exp(-z)); }

long double wide_predict(const WideParams& p, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
    const Eigen::Index H = p.H;
    std::vector<long double> h(static_cast<std::size_t>(H), 0.0L), c(h), z(static_cast<std::size_t>(4 * H));
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
        for (Eigen::Index r = 0; r < 4 * H; ++r) {
            long double acc = p.b(r);
            for (Eigen::Index k = 0; k < p.F; ++k) acc += p.wx(r, k) * static_cast<long double>(inputs(t, k));
            for (Eigen::Index k = 0; k < H; ++k) acc += p.wh(r, k) * h[static_cast<std::size_t>(k)];
            z[static_cast<std::size_t>(r)] = acc;
        }
        for (Eigen::Index j = 0; j < H; ++j) {
            const auto u = static_cast<std::size_t>(j);
            const long double ig = wide_sigmoid(z[static_cast<std::size_t>(kInput * H + j)]);
            const long double fg = wide_sigmoid(z[static_cast<std::size_t>(kForget * H + j)]);
            const long double gg = std::tanh(z[static_cast<std::size_t>(kCell * H + j)]);
            const long double og = wide_sigmoid(z[static_cast<std::size_t>(kOutput * H + j)]);
            c[u] = fg * c[u] + ig * gg;
            h[u] = og * std::tanh(c[u]);
        }
    }
    long double y = p.b_out();
    for (Eigen::Index j = 0; j < H; ++j) y += p.w_out(j) * h[static_cast<std::size_t>(j)];
    return y;
}

}  // namespace

long double reference_prediction(const LstmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
    return wide_predict(WideParams(params), inputs);
}

double grad_check(const LstmParams& params, const WindowSample& sample, double eps) {
    if (!(eps > 0.0)) throw Error("grad_check: eps must be > 0");
    const WindowSample batch[1] = {sample};
    const auto fwd = forward_batch(params, std::span<const WindowSample>(batch, 1));
    const auto analytic = backward(params, std::span<const WindowSample>(batch, 1), fwd,
                                   std::numeric_limits<double>::infinity());
    std::vector<double> a;
    for (const auto& blk : analytic.grads.blocks()) a.insert(a.end(), blk.begin(), blk.end());

    WideParams wide(params);
    const auto target = static_cast<long double>(sample.target);
    const auto loss = [&](const WideParams& p) {
        const long double r = wide_predict(p, sample.inputs()) - target;
        return r * r;
    };
    const auto h = static_cast<long double>(eps);
    double worst = 0.0;
    for (std::size_t k = 0; k < wide.v.size(); ++k) {
        const long double saved = wide.v[k];
        wide.v[k] = saved + h;
        const long double up = loss(wide);
        wide.v[k] = saved - h;
        const long double down = loss(wide);
        wide.v[k] = saved;
        const double numeric = static_cast<double>((up - down) / (2.0L * h));
        const double denom = std::max({std::abs(a[k]), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(a[k] - numeric) / denom);
    }
    return worst;
}

}  // namespace hydroseq
