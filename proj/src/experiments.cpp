#include "hydroseq/experiments.hpp"

#include "hydroseq/error.hpp"
#include "hydroseq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hydroseq {

const char* to_string(BaseVariant v) {
    switch (v) {
        case BaseVariant::PrecipOnly: return "PrecipOnly";
        case BaseVariant::PrecipPlusDynamic: return "PrecipPlusDynamic";
        case BaseVariant::DynamicPlusStatic: return "DynamicPlusStatic";
    }
    return "?";
}

BaseVariant parse_base_variant(const std::string& s) {
    for (auto v : {BaseVariant::PrecipOnly, BaseVariant::PrecipPlusDynamic, BaseVariant::DynamicPlusStatic}) {
        if (s == to_string(v)) return v;
    }
    throw Error("unknown feature set '" + s + "'");
}

FeatureSet FeatureSet::plus_dam_release(FeatureSet base, std::vector<std::string> dam_ids) {
    if (dam_ids.empty()) throw Error("PlusDamRelease needs at least one dam id");
    if (base.dam_release()) throw Error("PlusDamRelease wraps exactly one base variant");
    base.dam_ids = std::move(dam_ids);
    return base;
}

std::string FeatureSet::name() const {
    std::string n = to_string(base);
    if (dam_release()) {
        n = "PlusDamRelease(" + n;
        for (const auto& d : dam_ids) n += "," + d;
        n += ")";
    }
    return n;
}

FeatureAssembly assemble_features(const Dataset& dataset, const FeatureSet& features, bool with_matrices) {
    if (dataset.stations.empty()) throw Error("dataset has no stations");
    FeatureAssembly out;
    auto& schema = out.schema;
    auto require_channel = [&](const std::string& name) {
        for (const auto& st : dataset.stations) {
            if (!st.forcing.find(name)) {
                throw Error("feature set " + features.name() + " needs channel '" + name + "', missing at station '" +
                            st.id + "'");
            }
        }
        schema.push_back(name);
    };
    switch (features.base) {
        case BaseVariant::PrecipOnly: require_channel(features.precip_channel); break;
        case BaseVariant::PrecipPlusDynamic:
            require_channel(features.precip_channel);
            for (const auto& c : features.dynamic_channels) require_channel(c);
            break;
        case BaseVariant::DynamicPlusStatic: {
            for (const auto& c : features.dynamic_channels) require_channel(c);
            std::vector<std::string> names = features.static_names;
            if (names.empty()) {
                const auto& first = dataset.stations.front().statics;
                if (!first) throw Error("feature set DynamicPlusStatic needs static attributes");
                names = first->names;
            }
            for (const auto& n : names) {
                for (const auto& st : dataset.stations) {
                    if (!st.statics || !st.statics->get(n)) {
                        throw Error("feature set DynamicPlusStatic needs static attribute '" + n +
                                    "', missing at station '" + st.id + "'");
                    }
                }
                schema.push_back(n);
            }
            break;
        }
    }
    for (const auto& d : features.dam_ids) {
        if (!dataset.dam(d)) throw Error("feature set needs dam '" + d + "', absent from the dataset");
        schema.push_back(dam_feature_name(d));
    }
    if (std::set<std::string>(schema.begin(), schema.end()).size() != schema.size()) {
        throw Error("feature schema has duplicate names");
    }
    if (with_matrices) {
        for (const auto& st : dataset.stations) out.matrices.emplace(st.id, feature_matrix(dataset, st, schema));
    }
    return out;
}

void ExperimentSpec::validate() const {
    if (sequence_length < 1) throw Error("sequence_length must be >= 1");
    if (hidden_size < 1) throw Error("hidden_size must be >= 1");
    if (features.dam_release() && features.dam_ids.empty()) throw Error("PlusDamRelease needs dam ids");
    train.validate();
    split.validate();
}

Dataset restrict_stations(const Dataset& dataset, const std::vector<std::string>& stations) {
    if (stations.empty()) return dataset;
    Dataset out;
    out.dates = dataset.dates;
    out.split = dataset.split;
    out.dams = dataset.dams;
    out.excluded = dataset.excluded;
    out.normalized = dataset.normalized;
    std::set<std::string> wanted(stations.begin(), stations.end());
    for (const auto& id : wanted) out.stations.push_back(dataset.station(id));
    return out;
}

namespace {

/// Physical-unit discharge at each window's target day.
std::vector<double> observed_targets(const Dataset& raw, std::span<const WindowSample> windows) {
    std::vector<double> obs;
    obs.reserve(windows.size());
    for (const auto& w : windows) {
        const auto& g = raw.station(w.station_id).gauge;
        obs.push_back(g.discharge[static_cast<std::size_t>(g.dates.offset(w.target_date))]);
    }
    return obs;
}

/// Mean NSE over stations with a defined value; NaN when none is defined.
double mean_station_nse(std::span<const WindowSample> windows, std::span<const double> observed,
                        std::span<const double> predicted) {
    double sum = 0.0;
    std::size_t n = 0;
    std::size_t begin = 0;
    while (begin < windows.size()) {
        std::size_t end = begin;
        while (end < windows.size() && windows[end].station_id == windows[begin].station_id) ++end;
        const auto r = nse(observed.subspan(begin, end - begin), predicted.subspan(begin, end - begin));
        if (r.value) {
            sum += *r.value;
            ++n;
        }
        begin = end;
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

Dataset scoped_dataset(const Dataset& dataset, const ExperimentSpec& spec) {
    if (dataset.normalized) throw Error("experiments expect a dataset in physical units");
    Dataset scoped = restrict_stations(dataset, spec.stations);
    for (auto s : {SplitLabel::train, SplitLabel::validation, SplitLabel::test}) {
        const auto& r = spec.split.range(s);
        if (dataset.dates.offset(r.first) < 0 || dataset.dates.offset(r.last) < 0) {
            throw Error(std::string("split range '") + to_string(s) + "' lies outside the dataset calendar");
        }
    }
    scoped.split = spec.split;
    return scoped;
}

}  // namespace

TrainedModel train_model(const ExperimentSpec& spec, const Dataset& dataset) {
    spec.validate();
    const Dataset scoped = scoped_dataset(dataset, spec);
    TrainedModel model;
    model.spec = spec;
    model.feature_schema = assemble_features(scoped, spec.features, false).schema;
    model.norm = fit_normalizer(scoped, spec.log1p_discharge);
    const Dataset z = transform(model.norm, scoped, Direction::forward);

    const auto train = make_windows(z, spec.sequence_length, model.feature_schema, spec.split.train, spec.missing);
    if (train.empty()) throw Error("zero training windows");
    const auto val = make_windows(z, spec.sequence_length, model.feature_schema, spec.split.validation, spec.missing);
    if (val.empty()) throw Error("zero validation windows");
    const auto val_obs = observed_targets(scoped, val);

    std::vector<double> val_pred(val.size());
    auto validate = [&](const LstmParams& p) {
        const Eigen::VectorXd zp = predict_batch(p, val);
        for (std::size_t i = 0; i < val.size(); ++i) {
            val_pred[i] = model.norm.denormalize_discharge(val[i].station_id, zp(static_cast<Eigen::Index>(i)));
        }
        return mean_station_nse(val, val_obs, val_pred);
    };
    const auto init = init_params(spec.hidden_size, static_cast<Eigen::Index>(model.feature_schema.size()),
                                  spec.train.seed);
    auto fit_result = fit(init, train, spec.train, validate);
    model.params = std::move(fit_result.params);
    model.best_epoch = fit_result.best_epoch;
    model.validation_nse = fit_result.best_score;
    model.history = std::move(fit_result.history);
    return model;
}

std::vector<PredictedSeries> predict_series(const TrainedModel& model, const Dataset& dataset, const DateRange& range,
                                            std::size_t threads) {
    const auto& spec = model.spec;
    if (dataset.normalized) throw Error("predict_series expects a dataset in physical units");
    if (model.params.features() != static_cast<Eigen::Index>(model.feature_schema.size())) {
        throw Error("model feature count does not match its schema");
    }
    const Dataset scoped = restrict_stations(dataset, spec.stations);
    const auto schema = assemble_features(scoped, spec.features, false).schema;
    if (schema != model.feature_schema) throw Error("dataset feature schema does not match the model");
    for (const auto& st : scoped.stations) {
        if (!model.norm.discharge.contains(st.id)) {
            throw Error("model has no discharge statistics for station '" + st.id + "'");
        }
    }
    const Dataset z = transform(model.norm, scoped, Direction::forward);
    const DateIndex out_dates{range.first, static_cast<std::size_t>(range.days())};

    std::vector<PredictedSeries> out(scoped.stations.size());
    parallel_for(out.size(), threads, [&](std::size_t s) {
        const auto& st = scoped.stations[s];
        auto& ps = out[s];
        ps.station_id = st.id;
        ps.dates = out_dates;
        ps.predicted.assign(out_dates.length, kMissing);
        ps.observed.assign(out_dates.length, kMissing);
        for (std::size_t i = 0; i < out_dates.length; ++i) {
            const auto o = st.gauge.dates.offset(out_dates.at(i));
            if (o >= 0 && !st.gauge.missing[static_cast<std::size_t>(o)]) {
                ps.observed[i] = st.gauge.discharge[static_cast<std::size_t>(o)];
            }
        }
        const auto windows = make_windows(z, spec.sequence_length, schema, range, spec.missing, {st.id});
        if (windows.empty()) return;
        const Eigen::VectorXd zp = predict_batch(model.params, windows);
        for (std::size_t k = 0; k < windows.size(); ++k) {
            const auto i = static_cast<std::size_t>(out_dates.offset(windows[k].target_date));
            ps.predicted[i] = model.norm.denormalize_discharge(st.id, zp(static_cast<Eigen::Index>(k)));
        }
    });
    return out;
}

std::vector<StationScore> score_series(const std::vector<PredictedSeries>& series) {
    std::vector<StationScore> scores;
    for (const auto& ps : series) {
        const auto r = nse(ps.observed, ps.predicted);
        scores.push_back({ps.station_id, r.value, r.n_obs, r.reason});
    }
    return scores;
}

EvalReport evaluate(const TrainedModel& model, const Dataset& dataset, const DateRange& range, std::size_t threads) {
    return summarize(score_series(predict_series(model, dataset, range, threads)));
}

}  // namespace hydroseq
