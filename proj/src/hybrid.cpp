#include "hydroseq/hybrid.hpp"

#include "hydroseq/error.hpp"

#include <cmath>

namespace hydroseq {

bool month_in_range(YearMonth m, const DateRange& range) { return range.contains(m.first_day()); }

namespace {

std::vector<double> train_values(const MonthlySeries& s, const DateRange& range) {
    std::vector<double> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s.missing[i] && month_in_range(s.month_at(i), range)) out.push_back(s.values[i]);
    }
    return out;
}

double value_at(const MonthlySeries& s, YearMonth m) {
    const auto o = s.offset(m);
    if (o < 0 || s.missing[static_cast<std::size_t>(o)]) return kMissing;
    return s.values[static_cast<std::size_t>(o)];
}

double standardize(double x, const Moments& m) { return (x - m.mean) / m.std; }

}  // namespace

MonthlyNorm fit_monthly_norm(const MonthlySeries& observed, const MonthlySeries& precip, const MonthlySeries& natural,
                             const DateRange& train_range) {
    auto fit = [&](const MonthlySeries& s, const char* what) {
        try {
            return fit_moments(train_values(s, train_range));
        } catch (const Error&) {
            throw Error(std::string("monthly ") + what + ": fewer than 2 unmasked train months");
        }
    };
    return {fit(precip, "precipitation"), fit(natural, "naturalized discharge"), fit(observed, "discharge")};
}

std::vector<MonthlySample> build_monthly_samples(const MonthlySeries& observed, const MonthlySeries& precip,
                                                 const MonthlySeries& natural, const DateRange& range,
                                                 const MonthlyNorm& norm, const MonthlyOptions& options) {
    if (options.lookback < 1) throw Error("monthly lookback must be >= 1");
    const auto rows = static_cast<Eigen::Index>(observed.size());
    auto frame = std::make_shared<Eigen::MatrixXd>(rows, 2);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const YearMonth m = observed.month_at(static_cast<std::size_t>(r));
        const double p = value_at(precip, m);
        const double q = value_at(natural, m);
        (*frame)(r, 0) = std::isnan(p) ? kMissing : standardize(p, norm.precip);
        (*frame)(r, 1) = std::isnan(q) ? kMissing : (options.zero_proxy ? 0.0 : standardize(q, norm.natural));
    }
    const auto lookback = static_cast<Eigen::Index>(options.lookback);
    std::vector<MonthlySample> out;
    Eigen::Index bad_until = -1;  // last row index holding a missing input
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (r > 0 && !(*frame).row(r - 1).allFinite()) bad_until = r - 1;
        const auto i = static_cast<std::size_t>(r);
        const YearMonth m = observed.month_at(i);
        if (r < lookback || bad_until >= r - lookback) continue;
        if (observed.missing[i] || !month_in_range(m, range)) continue;
        MonthlySample s;
        s.window.station_id = observed.station_id;
        s.window.frame = frame;
        s.window.first_row = r - lookback;
        s.window.length = lookback;
        s.window.target = standardize(observed.values[i], norm.discharge);
        s.window.target_date = m.first_day();
        s.target_month = m;
        s.target_m3s = observed.values[i];
        s.proxy_m3s = value_at(natural, m);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<double> predict_monthly(const LstmParams& params, const MonthlyNorm& norm,
                                    const std::vector<MonthlySample>& samples) {
    std::vector<WindowSample> windows;
    windows.reserve(samples.size());
    for (const auto& s : samples) windows.push_back(s.window);
    const Eigen::VectorXd z = predict_batch(params, windows);
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out[i] = z(static_cast<Eigen::Index>(i)) * norm.discharge.std + norm.discharge.mean;
    }
    return out;
}

NseResult monthly_nse(const LstmParams& params, const MonthlyNorm& norm, const std::vector<MonthlySample>& samples) {
    std::vector<double> obs;
    for (const auto& s : samples) obs.push_back(s.target_m3s);
    return nse(obs, predict_monthly(params, norm, samples));
}

NseResult proxy_nse(const std::vector<MonthlySample>& samples) {
    std::vector<double> obs, proxy;
    for (const auto& s : samples) {
        obs.push_back(s.target_m3s);
        proxy.push_back(s.proxy_m3s);
    }
    return nse(obs, proxy);
}

HybridModel train_hybrid(const std::vector<MonthlySample>& train, const std::vector<MonthlySample>& validation,
                         const MonthlyNorm& norm, Eigen::Index hidden, const TrainConfig& cfg) {
    if (train.empty()) throw Error("hybrid: no training samples");
    if (validation.empty()) throw Error("hybrid: no validation samples");
    HybridModel model;
    model.norm = norm;
    model.station_id = train.front().window.station_id;
    std::vector<WindowSample> windows;
    windows.reserve(train.size());
    for (const auto& s : train) windows.push_back(s.window);
    auto validate = [&](const LstmParams& p) {
        const auto r = monthly_nse(p, norm, validation);
        return r.value ? *r.value : std::numeric_limits<double>::quiet_NaN();
    };
    auto res = fit(init_params(hidden, 2, cfg.seed), windows, cfg, validate);
    model.params = std::move(res.params);
    model.best_epoch = res.best_epoch;
    model.validation_nse = res.best_score;
    model.history = std::move(res.history);
    return model;
}

}  // namespace hydroseq
