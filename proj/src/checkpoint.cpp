#include "hydroseq/checkpoint.hpp"

#include "hydroseq/error.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace hydroseq {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
    if (!j.is_object()) throw Error(what + ": expected a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
        if (!ok.contains(k)) throw Error(what + ": unknown key '" + k + "'");
    }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_or_nan(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json matrix_json(const Eigen::MatrixXd& m) {
    json data = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (j.at("rows").get<Eigen::Index>() != rows || j.at("cols").get<Eigen::Index>() != cols) {
        throw Error(std::string("checkpoint block '") + name + "' has the wrong shape");
    }
    const auto& data = j.at("data");
    if (!data.is_array() || data.size() != static_cast<std::size_t>(rows * cols)) {
        throw Error(std::string("checkpoint block '") + name + "' has the wrong length");
    }
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    return m;
}

std::vector<EpochRecord> history_from_json(const json& j) {
    std::vector<EpochRecord> out;
    for (const auto& e : j) {
        out.push_back({e.at("epoch").get<std::size_t>(), number_or_nan(e.at("train_loss")),
                       number_or_nan(e.at("validation_nse"))});
    }
    return out;
}

void check_version(const json& j) {
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
        throw Error("unsupported checkpoint schema_version");
    }
}

}  // namespace

json to_json(const DateRange& r) { return json::array({r.first.iso(), r.last.iso()}); }

DateRange date_range_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) throw Error("date range must be a [start, end] pair");
    try {
        return {Date::parse(j[0].get<std::string>()), Date::parse(j[1].get<std::string>())};
    } catch (const std::invalid_argument& e) {
        throw Error(std::string("bad date in range: ") + e.what());
    }
}

json to_json(const SplitSpec& s) {
    return {{"train", to_json(s.train)}, {"validation", to_json(s.validation)}, {"test", to_json(s.test)}};
}

SplitSpec split_from_json(const json& j) {
    check_keys(j, {"train", "validation", "test"}, "split");
    SplitSpec s{date_range_from_json(j.at("train")), date_range_from_json(j.at("validation")),
                date_range_from_json(j.at("test"))};
    s.validate();
    return s;
}

json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"grad_clip_norm", c.grad_clip_norm},
            {"seed", c.seed},
            {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    check_keys(j, {"learning_rate", "batch_size", "max_epochs", "patience", "grad_clip_norm", "seed", "adam"},
               "train_config");
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    c.seed = j.value("seed", c.seed);
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        check_keys(a, {"beta1", "beta2", "epsilon"}, "train_config.adam");
        c.adam.beta1 = a.value("beta1", c.adam.beta1);
        c.adam.beta2 = a.value("beta2", c.adam.beta2);
        c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
    }
    c.validate();
    return c;
}

json to_json(const MissingPolicy& p) {
    return {{"max_gap", p.max_gap}, {"max_masked_fraction", p.max_masked_fraction}};
}

MissingPolicy missing_policy_from_json(const json& j) {
    check_keys(j, {"max_gap", "max_masked_fraction"}, "missing_policy");
    MissingPolicy p;
    p.max_gap = j.value("max_gap", p.max_gap);
    p.max_masked_fraction = j.value("max_masked_fraction", p.max_masked_fraction);
    return p;
}

json to_json(const Moments& m) { return {{"mean", m.mean}, {"std", m.std}, {"floored", m.floored}}; }

Moments moments_from_json(const json& j) {
    Moments m;
    m.mean = j.at("mean").get<double>();
    m.std = j.at("std").get<double>();
    m.floored = j.value("floored", false);
    if (!(m.std > 0.0)) throw Error("normalization std must be positive");
    return m;
}

json to_json(const NormStats& s) {
    json ch = json::object(), q = json::object();
    for (const auto& [k, m] : s.channels) ch[k] = to_json(m);
    for (const auto& [k, m] : s.discharge) q[k] = to_json(m);
    return {{"channels", std::move(ch)},
            {"discharge", std::move(q)},
            {"fitted_on", s.fitted_on},
            {"log1p_discharge", s.log1p_discharge},
            {"flagged", s.flagged}};
}

NormStats norm_stats_from_json(const json& j) {
    NormStats s;
    for (const auto& [k, v] : j.at("channels").items()) s.channels[k] = moments_from_json(v);
    for (const auto& [k, v] : j.at("discharge").items()) s.discharge[k] = moments_from_json(v);
    s.fitted_on = j.value("fitted_on", s.fitted_on);
    s.log1p_discharge = j.value("log1p_discharge", false);
    s.flagged = j.value("flagged", std::vector<std::string>{});
    return s;
}

json to_json(const FeatureSet& f) {
    json j{{"variant", to_string(f.base)},
           {"precip_channel", f.precip_channel},
           {"dynamic_channels", f.dynamic_channels},
           {"static_names", f.static_names}};
    if (f.dam_release()) j["dam_ids"] = f.dam_ids;
    return j;
}

FeatureSet feature_set_from_json(const json& j) {
    if (j.is_string()) {
        FeatureSet f;
        f.base = parse_base_variant(j.get<std::string>());
        return f;
    }
    check_keys(j, {"variant", "base", "dam_ids", "precip_channel", "dynamic_channels", "static_names"}, "feature_set");
    FeatureSet f;
    const std::string variant = j.value("variant", std::string(to_string(f.base)));
    std::vector<std::string> dams = j.value("dam_ids", std::vector<std::string>{});
    if (variant == "PlusDamRelease") {
        if (!j.contains("base")) throw Error("feature_set PlusDamRelease needs a 'base' variant");
        f.base = parse_base_variant(j.at("base").get<std::string>());
        if (dams.empty()) throw Error("feature_set PlusDamRelease needs non-empty dam_ids");
    } else {
        f.base = parse_base_variant(variant);
    }
    f.precip_channel = j.value("precip_channel", f.precip_channel);
    f.dynamic_channels = j.value("dynamic_channels", f.dynamic_channels);
    f.static_names = j.value("static_names", f.static_names);
    f.dam_ids = std::move(dams);
    return f;
}

json to_json(const ExperimentSpec& s) {
    json scope = s.stations.empty() ? json("all") : json(s.stations);
    return {{"experiment_name", s.name},
            {"feature_set", to_json(s.features)},
            {"scope", std::move(scope)},
            {"sequence_length", s.sequence_length},
            {"hidden_size", s.hidden_size},
            {"train_config", to_json(s.train)},
            {"split", to_json(s.split)},
            {"missing_policy", to_json(s.missing)},
            {"log1p_discharge", s.log1p_discharge}};
}

ExperimentSpec experiment_spec_from_json(const json& j) {
    ExperimentSpec s;
    s.name = j.value("experiment_name", s.name);
    if (j.contains("feature_set")) s.features = feature_set_from_json(j.at("feature_set"));
    if (j.contains("scope")) {
        const auto& sc = j.at("scope");
        if (sc.is_string()) {
            if (sc.get<std::string>() != "all") throw Error("scope must be \"all\" or a list of station ids");
        } else {
            s.stations = sc.get<std::vector<std::string>>();
            if (s.stations.empty()) throw Error("scoped station list must be non-empty");
        }
    }
    s.sequence_length = j.value("sequence_length", s.sequence_length);
    s.hidden_size = j.value("hidden_size", s.hidden_size);
    if (j.contains("train_config")) s.train = train_config_from_json(j.at("train_config"));
    if (!j.contains("split")) throw Error("experiment needs a split");
    s.split = split_from_json(j.at("split"));
    if (j.contains("missing_policy")) s.missing = missing_policy_from_json(j.at("missing_policy"));
    s.log1p_discharge = j.value("log1p_discharge", false);
    s.validate();
    return s;
}

json to_json(const LstmParams& p) {
    return {{"hidden", p.hidden()},
            {"features", p.features()},
            {"gate_order", "i,f,g,o"},
            {"wx", matrix_json(p.wx)},
            {"wh", matrix_json(p.wh)},
            {"b", matrix_json(p.b)},
            {"w_out", matrix_json(p.w_out)},
            {"b_out", p.b_out}};
}

LstmParams lstm_params_from_json(const json& j) {
    const auto H = j.at("hidden").get<Eigen::Index>();
    const auto F = j.at("features").get<Eigen::Index>();
    if (j.value("gate_order", std::string("i,f,g,o")) != "i,f,g,o") throw Error("unsupported gate order");
    LstmParams p = LstmParams::zeros(H, F);
    p.wx = matrix_from_json(j.at("wx"), 4 * H, F, "wx");
    p.wh = matrix_from_json(j.at("wh"), 4 * H, H, "wh");
    p.b = matrix_from_json(j.at("b"), 4 * H, 1, "b");
    p.w_out = matrix_from_json(j.at("w_out"), H, 1, "w_out");
    p.b_out = j.at("b_out").get<double>();
    if (!p.all_finite()) throw Error("checkpoint parameters are not finite");
    return p;
}

json to_json(const SeasonalSpec& s) {
    return {{"encoder_length", s.encoder_length},
            {"horizon", s.horizon},
            {"encoder_channels", s.encoder_channels},
            {"decoder_channels", s.decoder_channels},
            {"hidden", s.hidden}};
}

SeasonalSpec seasonal_spec_from_json(const json& j) {
    check_keys(j, {"encoder_length", "horizon", "encoder_channels", "decoder_channels", "hidden"}, "seasonal");
    SeasonalSpec s;
    s.encoder_length = j.value("encoder_length", s.encoder_length);
    s.horizon = j.value("horizon", s.horizon);
    s.encoder_channels = j.value("encoder_channels", s.encoder_channels);
    s.decoder_channels = j.value("decoder_channels", s.decoder_channels);
    s.hidden = j.value("hidden", s.hidden);
    s.validate();
    return s;
}

json to_json(const std::vector<EpochRecord>& history) {
    json out = json::array();
    for (const auto& e : history) {
        out.push_back({{"epoch", e.epoch},
                       {"train_loss", number_or_null(e.train_loss)},
                       {"validation_nse", number_or_null(e.validation_score)}});
    }
    return out;
}

json checkpoint_json(const TrainedModel& m) {
    return {{"schema_version", kCheckpointSchemaVersion},
            {"kind", "daily"},
            {"H", m.params.hidden()},
            {"F", m.params.features()},
            {"feature_schema", m.feature_schema},
            {"norm_stats", to_json(m.norm)},
            {"params", to_json(m.params)},
            {"spec", to_json(m.spec)},
            {"train_config", to_json(m.spec.train)},
            {"seed", m.spec.train.seed},
            {"best_epoch", m.best_epoch},
            {"validation_nse", number_or_null(m.validation_nse)},
            {"history", to_json(m.history)}};
}

json checkpoint_json(const HybridModel& m) {
    return {{"schema_version", kCheckpointSchemaVersion},
            {"kind", "hybrid"},
            {"H", m.params.hidden()},
            {"F", m.params.features()},
            {"feature_schema", {"precip_mm", "natural_q_m3s"}},
            {"station_id", m.station_id},
            {"norm_stats",
             {{"precip_mm", to_json(m.norm.precip)},
              {"natural_q_m3s", to_json(m.norm.natural)},
              {"discharge_m3s", to_json(m.norm.discharge)}}},
            {"params", to_json(m.params)},
            {"best_epoch", m.best_epoch},
            {"validation_nse", number_or_null(m.validation_nse)},
            {"history", to_json(m.history)}};
}

json checkpoint_json(const SeasonalModel& m) {
    json norm = json::object();
    for (const auto& [k, v] : m.norm) norm[k] = to_json(v);
    return {{"schema_version", kCheckpointSchemaVersion},
            {"kind", "seasonal"},
            {"H", m.params.hidden()},
            {"station_id", m.station_id},
            {"seasonal", to_json(m.spec)},
            {"norm_stats", std::move(norm)},
            {"encoder", to_json(m.params.encoder)},
            {"decoder", to_json(m.params.decoder)},
            {"best_epoch", m.best_epoch},
            {"validation_nse", number_or_null(m.validation_nse)},
            {"history", to_json(m.history)}};
}

AnyModel model_from_json(const json& j) {
    check_version(j);
    const std::string kind = j.value("kind", std::string("daily"));
    if (kind == "daily") {
        TrainedModel m;
        m.params = lstm_params_from_json(j.at("params"));
        m.feature_schema = j.at("feature_schema").get<std::vector<std::string>>();
        if (j.at("H").get<Eigen::Index>() != m.params.hidden() || j.at("F").get<Eigen::Index>() != m.params.features()) {
            throw Error("checkpoint H/F disagree with the parameter blocks");
        }
        if (m.params.features() != static_cast<Eigen::Index>(m.feature_schema.size())) {
            throw Error("checkpoint feature count does not match its feature_schema");
        }
        m.norm = norm_stats_from_json(j.at("norm_stats"));
        m.spec = experiment_spec_from_json(j.at("spec"));
        m.best_epoch = j.value("best_epoch", std::size_t{0});
        m.validation_nse = number_or_nan(j.at("validation_nse"));
        if (j.contains("history")) m.history = history_from_json(j.at("history"));
        return m;
    }
    if (kind == "hybrid") {
        HybridModel m;
        m.params = lstm_params_from_json(j.at("params"));
        if (m.params.features() != 2) throw Error("hybrid checkpoint must have 2 features");
        m.station_id = j.at("station_id").get<std::string>();
        const auto& n = j.at("norm_stats");
        m.norm = {moments_from_json(n.at("precip_mm")), moments_from_json(n.at("natural_q_m3s")),
                  moments_from_json(n.at("discharge_m3s"))};
        m.best_epoch = j.value("best_epoch", std::size_t{0});
        m.validation_nse = number_or_nan(j.at("validation_nse"));
        if (j.contains("history")) m.history = history_from_json(j.at("history"));
        return m;
    }
    if (kind == "seasonal") {
        SeasonalModel m;
        m.spec = seasonal_spec_from_json(j.at("seasonal"));
        m.params = {lstm_params_from_json(j.at("encoder")), lstm_params_from_json(j.at("decoder"))};
        if (m.params.encoder.hidden() != m.params.decoder.hidden() || m.params.hidden() != m.spec.hidden ||
            m.params.encoder.features() != static_cast<Eigen::Index>(m.spec.encoder_channels.size()) ||
            m.params.decoder.features() != static_cast<Eigen::Index>(m.spec.decoder_channels.size())) {
            throw Error("seasonal checkpoint shapes disagree with its spec");
        }
        m.station_id = j.at("station_id").get<std::string>();
        for (const auto& [k, v] : j.at("norm_stats").items()) m.norm[k] = moments_from_json(v);
        m.best_epoch = j.value("best_epoch", std::size_t{0});
        m.validation_nse = number_or_nan(j.at("validation_nse"));
        if (j.contains("history")) m.history = history_from_json(j.at("history"));
        return m;
    }
    throw Error("unknown checkpoint kind '" + kind + "'");
}

void save_checkpoint(const std::filesystem::path& path, const json& checkpoint) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << checkpoint.dump(2) << '\n';
}

AnyModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const json::exception& e) {
        throw Error("checkpoint " + path.string() + " is malformed: " + e.what());
    }
}

TrainedModel load_daily_checkpoint(const std::filesystem::path& path, const std::vector<std::string>& expected_schema) {
    auto any = load_checkpoint(path);
    auto* m = std::get_if<TrainedModel>(&any);
    if (!m) throw Error("checkpoint " + path.string() + " is not a daily model");
    if (!expected_schema.empty() && expected_schema != m->feature_schema) {
        throw Error("checkpoint feature schema does not match the requested schema");
    }
    return std::move(*m);
}

}  // namespace hydroseq
