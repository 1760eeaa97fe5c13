#include "hydroseq/seasonal.hpp"

#include "hydroseq/error.hpp"
#include "hydroseq/metrics.hpp"
#include "hydroseq/rng.hpp"

#include <cmath>
#include <set>

namespace hydroseq {

void SeasonalSpec::validate() const {
    if (encoder_length < 1) throw Error("seasonal encoder_length must be >= 1");
    if (horizon < 1) throw Error("seasonal horizon must be >= 1");
    if (encoder_channels.empty() || decoder_channels.empty()) throw Error("seasonal channel lists must be non-empty");
    if (hidden < 1) throw Error("seasonal hidden size must be >= 1");
}

EncoderDecoderParams EncoderDecoderParams::zeros(Eigen::Index hidden, Eigen::Index enc_features,
                                                 Eigen::Index dec_features) {
    return {LstmParams::zeros(hidden, enc_features), LstmParams::zeros(hidden, dec_features)};
}

EncoderDecoderParams init_encoder_decoder(Eigen::Index hidden, Eigen::Index enc_features, Eigen::Index dec_features,
                                          std::uint64_t seed) {
    EncoderDecoderParams p{init_params(hidden, enc_features, derive_seed(seed, "encoder")),
                           init_params(hidden, dec_features, derive_seed(seed, "decoder"))};
    p.encoder.w_out.setZero();
    p.encoder.b_out = 0.0;
    return p;
}

namespace {

std::vector<Eigen::MatrixXd> rows_as_steps(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    std::vector<Eigen::MatrixXd> x(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index t = 0; t < m.rows(); ++t) x[static_cast<std::size_t>(t)] = m.row(t).transpose();
    return x;
}

void check_shapes(const EncoderDecoderParams& p, const Eigen::Ref<const Eigen::MatrixXd>& hindcast,
                  const Eigen::Ref<const Eigen::MatrixXd>& drivers) {
    if (p.encoder.hidden() != p.decoder.hidden()) throw Error("encoder and decoder hidden sizes differ");
    if (hindcast.rows() < 1 || hindcast.cols() != p.encoder.features()) throw Error("hindcast shape mismatch");
    if (drivers.rows() < 1 || drivers.cols() != p.decoder.features()) throw Error("forecast driver shape mismatch");
    check_finite(hindcast, "hindcast");
    check_finite(drivers, "forecast drivers");
}

struct SeasonalForward {
    SequenceTrace encoder;
    SequenceTrace decoder;
    Eigen::MatrixXd predictions;  ///< horizon × B
};

SeasonalForward forward_impl(const EncoderDecoderParams& p, std::vector<Eigen::MatrixXd> enc_x,
                             std::vector<Eigen::MatrixXd> dec_x) {
    const Eigen::Index B = enc_x.front().cols();
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(p.hidden(), B);
    SeasonalForward f;
    f.encoder = run_sequence(p.encoder, std::move(enc_x), zero, zero);
    f.decoder = run_sequence(p.decoder, std::move(dec_x), f.encoder.h.back(), f.encoder.c.back());
    const auto K = static_cast<Eigen::Index>(f.decoder.steps());
    f.predictions.resize(K, B);
    for (Eigen::Index k = 0; k < K; ++k) {
        f.predictions.row(k) = p.decoder.w_out.transpose() * f.decoder.h[static_cast<std::size_t>(k)];
    }
    f.predictions.array() += p.decoder.b_out;
    return f;
}

template <typename SampleRef>
SeasonalForward forward_samples(const EncoderDecoderParams& p, std::span<const SampleRef> batch, const auto& get) {
    if (batch.empty()) throw Error("empty batch");
    const auto B = static_cast<Eigen::Index>(batch.size());
    const auto& first = get(batch[0]);
    std::vector<Eigen::MatrixXd> enc(static_cast<std::size_t>(first.hindcast.rows()),
                                     Eigen::MatrixXd(p.encoder.features(), B));
    std::vector<Eigen::MatrixXd> dec(static_cast<std::size_t>(first.drivers.rows()),
                                     Eigen::MatrixXd(p.decoder.features(), B));
    for (Eigen::Index b = 0; b < B; ++b) {
        const SeasonalSample& s = get(batch[static_cast<std::size_t>(b)]);
        check_shapes(p, s.hindcast, s.drivers);
        if (s.hindcast.rows() != first.hindcast.rows() || s.drivers.rows() != first.drivers.rows()) {
            throw Error("batch members differ in shape");
        }
        for (std::size_t t = 0; t < enc.size(); ++t) enc[t].col(b) = s.hindcast.row(static_cast<Eigen::Index>(t)).transpose();
        for (std::size_t t = 0; t < dec.size(); ++t) dec[t].col(b) = s.drivers.row(static_cast<Eigen::Index>(t)).transpose();
    }
    return forward_impl(p, std::move(enc), std::move(dec));
}

const auto by_value = [](const SeasonalSample& s) -> const SeasonalSample& { return s; };
const auto by_pointer = [](const SeasonalSample* s) -> const SeasonalSample& { return *s; };

double joint_norm(const EncoderDecoderParams& g) {
    const double a = global_norm(g.encoder);
    const double b = global_norm(g.decoder);
    return std::sqrt(a * a + b * b);
}

void scale(LstmParams& g, double s) {
    g.wx *= s;
    g.wh *= s;
    g.b *= s;
    g.w_out *= s;
    g.b_out *= s;
}

}  // namespace

Eigen::VectorXd seasonal_forecast(const EncoderDecoderParams& params, const Eigen::Ref<const Eigen::MatrixXd>& hindcast,
                                  const Eigen::Ref<const Eigen::MatrixXd>& drivers) {
    check_shapes(params, hindcast, drivers);
    return forward_impl(params, rows_as_steps(hindcast), rows_as_steps(drivers)).predictions.col(0);
}

LstmState encoder_final_state(const EncoderDecoderParams& params, const Eigen::Ref<const Eigen::MatrixXd>& hindcast) {
    if (hindcast.rows() < 1 || hindcast.cols() != params.encoder.features()) throw Error("hindcast shape mismatch");
    check_finite(hindcast, "hindcast");
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(params.hidden(), 1);
    const auto tr = run_sequence(params.encoder, rows_as_steps(hindcast), zero, zero);
    return {tr.h.back().col(0), tr.c.back().col(0)};
}

Eigen::MatrixXd seasonal_predict_batch(const EncoderDecoderParams& params, std::span<const SeasonalSample> batch) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(batch.size()), batch.empty() ? 0 : batch[0].drivers.rows());
    constexpr std::size_t chunk = 512;
    for (std::size_t start = 0; start < batch.size(); start += chunk) {
        const std::size_t n = std::min(chunk, batch.size() - start);
        const auto f = forward_samples(params, batch.subspan(start, n), by_value);
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = f.predictions.transpose();
    }
    return out;
}

SeasonalGradients seasonal_backward(const EncoderDecoderParams& params, std::span<const SeasonalSample* const> batch,
                                    double clip_norm) {
    const auto f = forward_samples(params, batch, by_pointer);
    const auto B = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index K = f.predictions.rows();
    const Eigen::Index H = params.hidden();
    Eigen::MatrixXd resid(K, B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& t = batch[static_cast<std::size_t>(b)]->targets;
        if (t.size() != K) throw Error("seasonal targets do not match the horizon");
        resid.col(b) = f.predictions.col(b) - t;
    }
    SeasonalGradients out;
    out.grads = EncoderDecoderParams::zeros(H, params.encoder.features(), params.decoder.features());
    const double n = static_cast<double>(B * K);
    out.loss = resid.squaredNorm() / n;
    const Eigen::MatrixXd dpred = resid * (2.0 / n);  // K × B

    auto& gd = out.grads.decoder;
    std::vector<Eigen::MatrixXd> dh_step(static_cast<std::size_t>(K));
    for (Eigen::Index k = 0; k < K; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        gd.w_out.noalias() += f.decoder.h[uk] * dpred.row(k).transpose();
        dh_step[uk] = params.decoder.w_out * dpred.row(k);
    }
    gd.b_out = dpred.sum();
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(H, B);
    Eigen::MatrixXd dh0, dc0;
    backprop_sequence(params.decoder, f.decoder, dh_step, zero, zero, gd, &dh0, &dc0);
    backprop_sequence(params.encoder, f.encoder, {}, dh0, dc0, out.grads.encoder);

    out.grad_norm = joint_norm(out.grads);
    if (std::isfinite(clip_norm) && out.grad_norm > clip_norm) {
        const double s = clip_norm / out.grad_norm;
        scale(out.grads.encoder, s);
        scale(out.grads.decoder, s);
    }
    return out;
}

// ---- long-double oracle ---------------------------------------------------

namespace {

struct WideLstm {
    Eigen::Index H = 0;
    Eigen::Index F = 0;
    std::vector<long double> v;  ///< block order wx, wh, b, w_out, b_out (column-major)

    explicit WideLstm(const LstmParams& p) : H(p.hidden()), F(p.features()) {
        for (const auto& blk : p.blocks())
            for (double x : blk) v.push_back(x);
    }
    long double wx(Eigen::Index r, Eigen::Index c) const { return v[static_cast<std::size_t>(c * 4 * H + r)]; }
    long double wh(Eigen::Index r, Eigen::Index c) const { return v[static_cast<std::size_t>(4 * H * F + c * 4 * H + r)]; }
    long double b(Eigen::Index r) const { return v[static_cast<std::size_t>(4 * H * (F + H) + r)]; }
    long double w_out(Eigen::Index r) const { return v[static_cast<std::size_t>(4 * H * (F + H) + 4 * H + r)]; }
    long double b_out() const { return v.back(); }

    void step(const Eigen::Ref<const Eigen::RowVectorXd>& x, std::vector<long double>& h,
              std::vector<long double>& c) const {
        std::vector<long double> z(static_cast<std::size_t>(4 * H));
        for (Eigen::Index r = 0; r < 4 * H; ++r) {
            long double acc = b(r);
            for (Eigen::Index k = 0; k < F; ++k) acc += wx(r, k) * static_cast<long double>(x(k));
            for (Eigen::Index k = 0; k < H; ++k) acc += wh(r, k) * h[static_cast<std::size_t>(k)];
            z[static_cast<std::size_t>(r)] = acc;
        }
        auto sig = [](long double u) { return 1.0L / (1.0L + std::exp(-u)); };
        for (Eigen::Index j = 0; j < H; ++j) {
            const auto u = static_cast<std::size_t>(j);
            const long double ig = sig(z[static_cast<std::size_t>(kInput * H + j)]);
            const long double fg = sig(z[static_cast<std::size_t>(kForget * H + j)]);
            const long double gg = std::tanh(z[static_cast<std::size_t>(kCell * H + j)]);
            const long double og = sig(z[static_cast<std::size_t>(kOutput * H + j)]);
            c[u] = fg * c[u] + ig * gg;
            h[u] = og * std::tanh(c[u]);
        }
    }
};

std::vector<long double> wide_forecast(const WideLstm& enc, const WideLstm& dec,
                                       const Eigen::Ref<const Eigen::MatrixXd>& hindcast,
                                       const Eigen::Ref<const Eigen::MatrixXd>& drivers) {
    std::vector<long double> h(static_cast<std::size_t>(enc.H), 0.0L), c(h);
    for (Eigen::Index t = 0; t < hindcast.rows(); ++t) enc.step(hindcast.row(t), h, c);
    std::vector<long double> out;
    for (Eigen::Index t = 0; t < drivers.rows(); ++t) {
        dec.step(drivers.row(t), h, c);
        long double y = dec.b_out();
        for (Eigen::Index j = 0; j < dec.H; ++j) y += dec.w_out(j) * h[static_cast<std::size_t>(j)];
        out.push_back(y);
    }
    return out;
}

}  // namespace

std::vector<long double> seasonal_reference(const EncoderDecoderParams& params,
                                            const Eigen::Ref<const Eigen::MatrixXd>& hindcast,
                                            const Eigen::Ref<const Eigen::MatrixXd>& drivers) {
    check_shapes(params, hindcast, drivers);
    return wide_forecast(WideLstm(params.encoder), WideLstm(params.decoder), hindcast, drivers);
}

double seasonal_grad_check(const EncoderDecoderParams& params, const SeasonalSample& sample, double eps) {
    if (!(eps > 0.0)) throw Error("seasonal_grad_check: eps must be > 0");
    const SeasonalSample* batch[1] = {&sample};
    const auto analytic = seasonal_backward(params, batch, std::numeric_limits<double>::infinity());
    std::vector<double> a;
    for (const auto* g : {&analytic.grads.encoder, &analytic.grads.decoder})
        for (const auto& blk : g->blocks()) a.insert(a.end(), blk.begin(), blk.end());

    WideLstm enc(params.encoder), dec(params.decoder);
    const auto loss = [&] {
        const auto y = wide_forecast(enc, dec, sample.hindcast, sample.drivers);
        long double s = 0.0L;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const long double r = y[k] - static_cast<long double>(sample.targets(static_cast<Eigen::Index>(k)));
            s += r * r;
        }
        return s / static_cast<long double>(y.size());
    };
    const auto h = static_cast<long double>(eps);
    double worst = 0.0;
    std::size_t idx = 0;
    for (auto* w : {&enc, &dec}) {
        for (auto& x : w->v) {
            const long double saved = x;
            x = saved + h;
            const long double up = loss();
            x = saved - h;
            const long double down = loss();
            x = saved;
            const double numeric = static_cast<double>((up - down) / (2.0L * h));
            const double denom = std::max({std::abs(a[idx]), std::abs(numeric), 1e-12});
            worst = std::max(worst, std::abs(a[idx] - numeric) / denom);
            ++idx;
        }
    }
    return worst;
}

// ---- data -----------------------------------------------------------------

namespace {

const MonthlySeries& channel(const MonthlyChannels& channels, const std::string& name) {
    const auto it = channels.find(name);
    if (it == channels.end()) throw Error("seasonal model needs monthly channel '" + name + "'");
    return it->second;
}

/// Normalized value of `name` at month `m`, or NaN when absent or masked.
double normalized_at(const MonthlyChannels& channels, const std::map<std::string, Moments>& norm,
                     const std::string& name, YearMonth m) {
    const auto& s = channel(channels, name);
    const auto o = s.offset(m);
    if (o < 0 || s.missing[static_cast<std::size_t>(o)]) return kMissing;
    const auto it = norm.find(name);
    if (it == norm.end()) throw Error("no monthly statistics for channel '" + name + "'");
    return (s.values[static_cast<std::size_t>(o)] - it->second.mean) / it->second.std;
}

Eigen::MatrixXd block(const MonthlyChannels& channels, const std::map<std::string, Moments>& norm,
                      const std::vector<std::string>& names, YearMonth first, std::size_t months) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(months), static_cast<Eigen::Index>(names.size()));
    for (std::size_t t = 0; t < months; ++t)
        for (std::size_t j = 0; j < names.size(); ++j)
            m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                normalized_at(channels, norm, names[j], first + static_cast<std::int64_t>(t));
    return m;
}

const std::string kTarget = "discharge_m3s";

}  // namespace

std::map<std::string, Moments> fit_seasonal_norm(const MonthlyChannels& channels, const SeasonalSpec& spec,
                                                 const DateRange& train_range) {
    spec.validate();
    std::set<std::string> names(spec.encoder_channels.begin(), spec.encoder_channels.end());
    names.insert(spec.decoder_channels.begin(), spec.decoder_channels.end());
    names.insert(kTarget);
    std::map<std::string, Moments> out;
    for (const auto& n : names) {
        const auto& s = channel(channels, n);
        std::vector<double> v;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!s.missing[i] && month_in_range(s.month_at(i), train_range)) v.push_back(s.values[i]);
        }
        if (v.size() < 2) throw Error("monthly channel '" + n + "': fewer than 2 unmasked train months");
        out[n] = fit_moments(v);
    }
    return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> seasonal_inputs(const MonthlyChannels& channels, const SeasonalSpec& spec,
                                                            const std::map<std::string, Moments>& norm,
                                                            YearMonth first_month) {
    const auto le = static_cast<std::int64_t>(spec.encoder_length);
    auto hind = block(channels, norm, spec.encoder_channels, first_month + (-le), spec.encoder_length);
    auto drv = block(channels, norm, spec.decoder_channels, first_month, spec.horizon);
    if (!hind.allFinite()) throw Error("hindcast before " + first_month.iso() + " is incomplete");
    if (!drv.allFinite()) throw Error("forecast drivers from " + first_month.iso() + " are incomplete");
    return {std::move(hind), std::move(drv)};
}

std::vector<SeasonalSample> build_seasonal_samples(const MonthlyChannels& channels, const SeasonalSpec& spec,
                                                   const std::map<std::string, Moments>& norm,
                                                   const DateRange& range) {
    spec.validate();
    const auto& target = channel(channels, kTarget);
    const auto& tm = norm.at(kTarget);
    std::vector<SeasonalSample> out;
    const auto le = static_cast<std::int64_t>(spec.encoder_length);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const YearMonth m = target.month_at(i);
        if (!month_in_range(m, range)) continue;
        SeasonalSample s;
        s.station_id = target.station_id;
        s.first_month = m;
        s.hindcast = block(channels, norm, spec.encoder_channels, m + (-le), spec.encoder_length);
        s.drivers = block(channels, norm, spec.decoder_channels, m, spec.horizon);
        s.targets.resize(static_cast<Eigen::Index>(spec.horizon));
        s.targets_m3s.resize(s.targets.size());
        bool ok = s.hindcast.allFinite() && s.drivers.allFinite();
        for (std::size_t k = 0; ok && k < spec.horizon; ++k) {
            const auto o = target.offset(m + static_cast<std::int64_t>(k));
            if (o < 0 || target.missing[static_cast<std::size_t>(o)]) {
                ok = false;
                break;
            }
            const double q = target.values[static_cast<std::size_t>(o)];
            s.targets_m3s(static_cast<Eigen::Index>(k)) = q;
            s.targets(static_cast<Eigen::Index>(k)) = (q - tm.mean) / tm.std;
        }
        if (ok) out.push_back(std::move(s));
    }
    return out;
}

SeasonalModel train_seasonal(const std::vector<SeasonalSample>& train, const std::vector<SeasonalSample>& validation,
                             const SeasonalSpec& spec, const std::map<std::string, Moments>& norm,
                             const TrainConfig& cfg) {
    spec.validate();
    if (train.empty()) throw Error("seasonal: no training samples");
    if (validation.empty()) throw Error("seasonal: no validation samples");
    const auto& tm = norm.at(kTarget);
    SeasonalModel model;
    model.spec = spec;
    model.norm = norm;
    model.station_id = train.front().station_id;

    auto init = init_encoder_decoder(spec.hidden, static_cast<Eigen::Index>(spec.encoder_channels.size()),
                                     static_cast<Eigen::Index>(spec.decoder_channels.size()), cfg.seed);
    OptimState enc_state = OptimState::zeros_like(init.encoder);
    OptimState dec_state = OptimState::zeros_like(init.decoder);
    auto step = [&](EncoderDecoderParams& p, std::span<const SeasonalSample* const> batch) {
        auto g = seasonal_backward(p, batch, cfg.grad_clip_norm);
        adam_update(p.encoder, g.grads.encoder, enc_state, cfg);
        adam_update(p.decoder, g.grads.decoder, dec_state, cfg);
        return g.loss;
    };
    std::vector<double> obs;
    for (const auto& s : validation) obs.insert(obs.end(), s.targets_m3s.begin(), s.targets_m3s.end());
    auto validate = [&](const EncoderDecoderParams& p) {
        const Eigen::MatrixXd z = seasonal_predict_batch(p, validation);
        std::vector<double> pred;
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            for (Eigen::Index k = 0; k < z.cols(); ++k) pred.push_back(z(i, k) * tm.std + tm.mean);
        const auto r = nse(obs, pred);
        return r.value ? *r.value : std::numeric_limits<double>::quiet_NaN();
    };
    auto res = fit_loop<EncoderDecoderParams, SeasonalSample>(init, train, cfg, step, validate);
    model.params = std::move(res.params);
    model.best_epoch = res.best_epoch;
    model.validation_nse = res.best_score;
    model.history = std::move(res.history);
    return model;
}

std::vector<double> forecast_m3s(const SeasonalModel& model, const Eigen::Ref<const Eigen::MatrixXd>& hindcast,
                                 const Eigen::Ref<const Eigen::MatrixXd>& drivers) {
    const auto& tm = model.norm.at(kTarget);
    const Eigen::VectorXd z = seasonal_forecast(model.params, hindcast, drivers);
    std::vector<double> out;
    for (Eigen::Index k = 0; k < z.size(); ++k) out.push_back(z(k) * tm.std + tm.mean);
    return out;
}

}  // namespace hydroseq
