#include "hydroseq/cli.hpp"

#include "hydroseq/checkpoint.hpp"
#include "hydroseq/error.hpp"
#include "hydroseq/experiments.hpp"
#include "hydroseq/hybrid.hpp"
#include "hydroseq/metrics.hpp"
#include "hydroseq/rng.hpp"
#include "hydroseq/seasonal.hpp"
#include "hydroseq/synthbasin.hpp"
#include "hydroseq/timeseries.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

namespace hydroseq::cli {

namespace fs = std::filesystem;

std::string config_hash(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

// ---- parsing ----------------------------------------------------------------

namespace {

struct Flags {
    std::string config, out, data, checkpoint, spec, start, model, station, split, mode, origin;
    std::vector<std::string> inputs, names;
    std::uint64_t seed = 0;
    std::size_t threads = 1, days = 0, epochs = 0, hidden = 0, batch = 0, h = 4, f = 3, l = 5;
    double lr = 0.0, eps = 1e-5;
    int verbosity = 0;
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path.string() + " is not valid JSON: " + e.what());
    }
}

/// Assigns `value` at a '/'-separated path inside `root`, creating objects on the way.
void put(json& root, const std::string& path, json value) { root[json::json_pointer("/" + path)] = std::move(value); }

std::optional<std::size_t> env_threads() {
    const char* v = std::getenv("HYDROSEQ_THREADS");
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) return std::nullopt;
    return static_cast<std::size_t>(n);
}

}  // namespace

RunConfig parse_args(int argc, const char* const* argv) {
    CLI::App app{"Streamflow forecasting with sequence-to-value LSTMs", "hydroseq"};
    app.require_subcommand(1, 1);
    app.allow_extras(false);
    Flags f;
    struct Opt {
        CLI::Option* opt;
        std::string key;
    };
    std::vector<Opt> mapped;
    auto common = [&](CLI::App* sc) {
        sc->add_option("--config", f.config, "JSON file with settings; flags override its values")
            ->check(CLI::ExistingFile);
        mapped.push_back({sc->add_option("--out", f.out, "Output directory"), "out_dir"});
        mapped.push_back({sc->add_option("--seed", f.seed, "Run seed"), "seed"});
        sc->add_option("--threads", f.threads, "Worker threads (default: $HYDROSEQ_THREADS or 1)")
            ->check(CLI::PositiveNumber);
        sc->add_flag("-v,--verbose", f.verbosity, "More log lines");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic regulated-basin dataset");
    common(synth);
    mapped.push_back({synth->add_option("--spec", f.spec, "Basin spec JSON")->check(CLI::ExistingFile), "spec"});
    mapped.push_back({synth->add_option("--days", f.days, "Number of days")->check(CLI::PositiveNumber), "days"});
    mapped.push_back({synth->add_option("--start", f.start, "First day (YYYY-MM-DD)"), "start"});

    auto* train = app.add_subcommand("train", "Train a daily, hybrid or seasonal model");
    common(train);
    mapped.push_back({train->add_option("--data", f.data, "Dataset directory"), "paths/data_dir"});
    mapped.push_back({train->add_option("--model", f.model, "daily | hybrid | seasonal")
                          ->check(CLI::IsMember({"daily", "hybrid", "seasonal"})),
                      "model"});
    mapped.push_back({train->add_option("--station", f.station, "Station for hybrid/seasonal models"), "station"});
    mapped.push_back({train->add_option("--epochs", f.epochs, "Maximum epochs")->check(CLI::PositiveNumber),
                      "train_config/max_epochs"});
    mapped.push_back({train->add_option("--hidden", f.hidden, "Hidden size")->check(CLI::PositiveNumber),
                      "hidden_size"});
    mapped.push_back({train->add_option("--batch", f.batch, "Batch size")->check(CLI::PositiveNumber),
                      "train_config/batch_size"});
    mapped.push_back({train->add_option("--lr", f.lr, "Learning rate")->check(CLI::PositiveNumber),
                      "train_config/learning_rate"});

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
    common(evaluate);
    mapped.push_back({evaluate->add_option("--checkpoint", f.checkpoint, "Checkpoint JSON"), "checkpoint"});
    mapped.push_back({evaluate->add_option("--data", f.data, "Dataset directory"), "paths/data_dir"});
    mapped.push_back({evaluate->add_option("--split", f.split, "train | validation | test")
                          ->check(CLI::IsMember({"train", "validation", "test"})),
                      "split_label"});

    auto* forecast = app.add_subcommand("forecast", "Daily predictions or a seasonal forecast");
    common(forecast);
    mapped.push_back({forecast->add_option("--checkpoint", f.checkpoint, "Checkpoint JSON"), "checkpoint"});
    mapped.push_back({forecast->add_option("--data", f.data, "Dataset directory"), "paths/data_dir"});
    mapped.push_back({forecast->add_option("--mode", f.mode, "daily | seasonal")
                          ->check(CLI::IsMember({"daily", "seasonal"})),
                      "mode"});
    mapped.push_back({forecast->add_option("--origin", f.origin, "First forecast month (YYYY-MM)"), "origin"});
    mapped.push_back({forecast->add_option("--split", f.split, "Range of daily predictions")
                          ->check(CLI::IsMember({"train", "validation", "test"})),
                      "split_label"});

    auto* report = app.add_subcommand("report", "Tabulate several evaluation reports");
    common(report);
    mapped.push_back({report->add_option("--inputs", f.inputs, "report.json files"), "inputs"});
    mapped.push_back({report->add_option("--names", f.names, "Row labels (default: parent directory names)"),
                      "names"});

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the LSTM gradient");
    gradcheck->set_help_flag("--help", "Print this help message and exit");
    common(gradcheck);
    mapped.push_back({gradcheck->add_option("--h,--hidden", f.h, "Hidden size")->check(CLI::PositiveNumber), "h"});
    mapped.push_back({gradcheck->add_option("--f,--features", f.f, "Feature count")->check(CLI::PositiveNumber), "f"});
    mapped.push_back({gradcheck->add_option("--l,--length", f.l, "Sequence length")->check(CLI::PositiveNumber), "l"});
    mapped.push_back({gradcheck->add_option("--eps", f.eps, "Difference step")->check(CLI::PositiveNumber), "eps"});

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        throw UsageError("", app.help());
    } catch (const CLI::CallForAllHelp&) {
        throw UsageError("", app.help("", CLI::AppFormatMode::All));
    } catch (const CLI::ParseError& e) {
        const auto subs = app.get_subcommands();
        throw UsageError(e.what(), subs.empty() ? app.help() : subs.front()->help());
    }

    CLI::App* sub = app.get_subcommands().front();
    RunConfig cfg;
    cfg.command = sub->get_name();
    if (!f.config.empty()) {
        try {
            cfg.settings = read_json_file(f.config);
        } catch (const Error& e) {
            throw UsageError(e.what(), sub->help());
        }
        if (!cfg.settings.is_object()) throw UsageError("config must be a JSON object", sub->help());
    }
    json& s = cfg.settings;
    for (const auto& m : mapped) {
        if (m.opt->count() == 0) continue;
        const auto& res = m.opt->results();
        if (m.key == "inputs" || m.key == "names") {
            put(s, m.key, res);
        } else if (m.key == "seed") {
            put(s, "seed", f.seed);
            if (cfg.command == "train") put(s, "train_config/seed", f.seed);
        } else if (m.key == "days" || m.key == "h" || m.key == "f" || m.key == "l" || m.key == "hidden_size" ||
                   m.key == "train_config/max_epochs" || m.key == "train_config/batch_size") {
            put(s, m.key, std::stoull(res.front()));
        } else if (m.key == "eps" || m.key == "train_config/learning_rate") {
            put(s, m.key, std::stod(res.front()));
        } else {
            put(s, m.key, res.front());
        }
    }
    // the config file may carry the seed once at top level
    if (cfg.command == "train" && s.contains("seed") && !(s.contains("train_config") && s["train_config"].contains("seed"))) {
        put(s, "train_config/seed", s["seed"]);
    }

    auto need = [&](const char* key, const char* flag) {
        if (!s.contains(json::json_pointer(std::string("/") + key))) {
            throw UsageError(std::string("missing required option ") + flag, sub->help());
        }
    };
    if (cfg.command == "synth") {
        need("spec", "--spec");
        need("out_dir", "--out");
    } else if (cfg.command == "train") {
        if (!s.contains("paths") || !s["paths"].contains("data_dir")) throw UsageError("missing required option --data", sub->help());
        need("out_dir", "--out");
    } else if (cfg.command == "evaluate" || cfg.command == "forecast") {
        need("checkpoint", "--checkpoint");
        if (!s.contains("paths") || !s["paths"].contains("data_dir")) throw UsageError("missing required option --data", sub->help());
        need("out_dir", "--out");
    } else if (cfg.command == "report") {
        need("inputs", "--inputs");
        need("out_dir", "--out");
    }

    try {
        if (s.contains("out_dir")) cfg.out_dir = s["out_dir"].get<std::string>();
        if (s.contains("checkpoint")) cfg.checkpoint = s["checkpoint"].get<std::string>();
        if (s.contains("spec")) cfg.spec_file = s["spec"].get<std::string>();
        if (s.contains("paths") && s["paths"].contains("data_dir")) cfg.data_dir = s["paths"]["data_dir"].get<std::string>();
        if (s.contains("seed")) cfg.seed = s["seed"].get<std::uint64_t>();
        if (s.contains("inputs")) cfg.inputs = s["inputs"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad config value: ") + e.what(), sub->help());
    }
    cfg.verbosity = f.verbosity;
    std::optional<std::size_t> threads;
    for (auto* o : sub->get_options()) {
        if (o->get_name() == "--threads" && o->count() > 0) threads = f.threads;
    }
    if (!threads && s.contains("threads")) threads = s["threads"].get<std::size_t>();
    if (!threads) threads = env_threads();
    cfg.threads = threads.value_or(1);
    return cfg;
}

// ---- data loading -------------------------------------------------------------

namespace {

struct RawData {
    std::vector<GaugeSeries> gauges;
    std::vector<ForcingSeries> forcings;
    std::vector<StaticAttributes> statics;
    std::vector<DamLevelSeries> dams;
    std::vector<MonthlySeries> natural;
    std::map<std::string, Coordinates> coords;
    std::optional<SplitSpec> manifest_split;
};

fs::path setting_path(const json& s, const char* key, const fs::path& fallback) {
    if (s.contains("paths") && s["paths"].contains(key)) return s["paths"][key].get<std::string>();
    return fallback;
}

RawData load_data(const fs::path& dir, const json& s) {
    if (!fs::is_directory(dir)) throw Error("data directory " + dir.string() + " does not exist");
    RawData d;
    QualityAllowlist allow;
    if (s.contains("quality_allowlist")) {
        for (const auto& c : s["quality_allowlist"]) allow.insert(c.get<std::string>());
    }
    const fs::path gauges = setting_path(s, "gauges", dir / "gauges");
    const fs::path forcing = setting_path(s, "forcing", dir / "forcing");
    std::vector<fs::path> files;
    if (fs::is_directory(gauges)) {
        for (const auto& e : fs::directory_iterator(gauges)) {
            if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("no gauge files found under " + gauges.string());
    for (const auto& p : files) {
        d.gauges.push_back(parse_gauge_csv(p, allow));
        const auto fp = forcing / p.filename();
        if (fs::exists(fp)) d.forcings.push_back(parse_forcing_csv(fp));
    }
    const auto statics = setting_path(s, "static", dir / "static_attributes.csv");
    if (fs::exists(statics)) d.statics = parse_static_csv(statics);
    const auto dams = setting_path(s, "dams", dir / "dam_levels.csv");
    if (fs::exists(dams)) d.dams = parse_dam_csv(dams);
    const auto natural = setting_path(s, "natural_monthly", dir / "natural_monthly.csv");
    if (fs::exists(natural)) d.natural = parse_natural_monthly_csv(natural);
    const auto coords = setting_path(s, "coordinates", dir / "stations.csv");
    if (fs::exists(coords)) d.coords = parse_coordinates_csv(coords);
    if (fs::exists(dir / "manifest.json")) {
        const auto m = read_json_file(dir / "manifest.json");
        if (m.contains("split")) d.manifest_split = split_from_json(m["split"]);
    }
    return d;
}

SplitSpec resolve_split(const json& s, const RawData& d) {
    if (s.contains("split")) return split_from_json(s["split"]);
    if (d.manifest_split) return *d.manifest_split;
    throw Error("no split given in the config and none recorded in the dataset manifest");
}

Dataset make_dataset(const RawData& d, const SplitSpec& split) {
    auto ds = build_dataset(d.gauges, d.forcings, d.statics, split, d.dams);
    if (ds.stations.empty()) throw Error("no station survived dataset assembly");
    return ds;
}

const GaugeSeries& gauge_of(const RawData& d, const std::string& id) {
    for (const auto& g : d.gauges)
        if (g.station_id == id) return g;
    throw Error("no gauge for station '" + id + "'");
}

const ForcingSeries& forcing_of(const RawData& d, const std::string& id) {
    for (const auto& f : d.forcings)
        if (f.station_id == id) return f;
    throw Error("no forcing for station '" + id + "'");
}

const MonthlySeries& natural_of(const RawData& d, const std::string& id) {
    for (const auto& n : d.natural)
        if (n.station_id == id) return n;
    throw Error("no naturalized monthly series for station '" + id + "'");
}

std::string monthly_station(const json& s, const RawData& d) {
    if (s.contains("station")) return s["station"].get<std::string>();
    if (d.gauges.size() == 1) return d.gauges.front().station_id;
    throw Error("hybrid and seasonal models need --station when the dataset has several stations");
}

MonthlyChannels monthly_channels(const RawData& d, const std::string& id) {
    MonthlyChannels ch;
    for (auto& m : monthly_aggregate(forcing_of(d, id))) ch.emplace(m.name, std::move(m));
    ch.emplace("natural_q_m3s", natural_of(d, id));
    ch.emplace("discharge_m3s", monthly_aggregate(gauge_of(d, id)));
    return ch;
}

struct HybridInputs {
    MonthlySeries observed, precip, natural;
};

HybridInputs hybrid_inputs(const RawData& d, const std::string& id, const std::string& precip_channel) {
    const auto& f = forcing_of(d, id);
    const Channel* p = f.find(precip_channel);
    if (!p) throw Error("station '" + id + "' has no channel '" + precip_channel + "'");
    return {monthly_aggregate(gauge_of(d, id)), monthly_aggregate(id, *p, f.dates), natural_of(d, id)};
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::string history_csv(const std::vector<EpochRecord>& h) {
    std::string s = "epoch,train_loss,validation_nse\n";
    for (const auto& e : h) {
        s += std::to_string(e.epoch) + ',' + format_number(e.train_loss) + ',' + format_number(e.validation_score) + '\n';
    }
    return s;
}

DateRange range_of(const SplitSpec& split, const json& s) {
    const std::string label = s.value("split_label", std::string("test"));
    if (label == "train") return split.train;
    if (label == "validation") return split.validation;
    return split.test;
}

// ---- commands -------------------------------------------------------------------

void cmd_synth(const RunConfig& c, std::ostream& out) {
    const json& s = c.settings;
    const json spec = read_json_file(c.spec_file);
    if (!spec.contains("basins") || !spec["basins"].is_array()) throw Error("spec needs a 'basins' array");
    std::vector<synth::BasinSpec> basins;
    for (const auto& b : spec["basins"]) basins.push_back(synth::basin_from_json(b));
    std::map<std::string, synth::DamSpec> dams;
    if (spec.contains("dams")) {
        for (const auto& [basin, d] : spec["dams"].items()) dams.emplace(basin, synth::dam_from_json(d));
    }
    const std::size_t days = s.value("days", spec.value("days", std::size_t{0}));
    if (days < 1) throw Error("synth needs --days");
    SplitSpec split;
    if (spec.contains("split")) {
        split = split_from_json(spec["split"]);
    } else {
        Date start;
        try {
            start = Date::parse(s.value("start", spec.value("start", std::string("2001-01-01"))));
        } catch (const std::invalid_argument& e) {
            throw Error(std::string("bad start date: ") + e.what());
        }
        const auto n = static_cast<std::int64_t>(days);
        const auto n_train = n * 60 / 100, n_val = n * 15 / 100;
        split.train = {start, start + (n_train - 1)};
        split.validation = {start + n_train, start + (n_train + n_val - 1)};
        split.test = {start + (n_train + n_val), start + (n - 1)};
        split.validate();
    }
    const std::uint64_t seed = s.value("seed", spec.value("seed", std::uint64_t{0}));
    const auto data = synth::make_dataset(basins, dams, days, split, seed, c.out_dir);
    out << "synth: wrote " << data.gauges.size() << " basins x " << days << " days to " << c.out_dir.string() << '\n';
}

void cmd_train(const RunConfig& c, std::ostream& out) {
    const json& s = c.settings;
    const RawData d = load_data(c.data_dir, s);
    const std::string kind = s.value("model", std::string("daily"));
    json spec_json = s;
    spec_json["split"] = to_json(resolve_split(s, d));
    json ck;
    std::vector<EpochRecord> history;
    double val = 0.0;
    std::size_t best = 0;
    if (kind == "daily") {
        const ExperimentSpec spec = experiment_spec_from_json(spec_json);
        const Dataset ds = make_dataset(d, spec.split);
        for (const auto& e : ds.excluded) out << "excluded " << e.station_id << ": " << e.reason << '\n';
        const auto model = train_model(spec, ds);
        ck = checkpoint_json(model);
        history = model.history;
        val = model.validation_nse;
        best = model.best_epoch;
    } else {
        const SplitSpec split = split_from_json(spec_json["split"]);
        const std::string station = monthly_station(s, d);
        TrainConfig cfg;
        if (s.contains("train_config")) cfg = train_config_from_json(s["train_config"]);
        const auto hidden = s.value("hidden_size", Eigen::Index{16});
        if (kind == "hybrid") {
            const auto in = hybrid_inputs(d, station, s.value("precip_channel", std::string("precip_mm")));
            const auto norm = fit_monthly_norm(in.observed, in.precip, in.natural, split.train);
            const auto tr = build_monthly_samples(in.observed, in.precip, in.natural, split.train, norm);
            const auto va = build_monthly_samples(in.observed, in.precip, in.natural, split.validation, norm);
            const auto model = train_hybrid(tr, va, norm, hidden, cfg);
            ck = checkpoint_json(model);
            history = model.history;
            val = model.validation_nse;
            best = model.best_epoch;
        } else if (kind == "seasonal") {
            SeasonalSpec spec;
            if (s.contains("seasonal")) spec = seasonal_spec_from_json(s["seasonal"]);
            if (s.contains("hidden_size")) spec.hidden = hidden;
            const auto ch = monthly_channels(d, station);
            const auto norm = fit_seasonal_norm(ch, spec, split.train);
            const auto tr = build_seasonal_samples(ch, spec, norm, split.train);
            const auto va = build_seasonal_samples(ch, spec, norm, split.validation);
            const auto model = train_seasonal(tr, va, spec, norm, cfg);
            ck = checkpoint_json(model);
            history = model.history;
            val = model.validation_nse;
            best = model.best_epoch;
        } else {
            throw Error("unknown model kind '" + kind + "'");
        }
    }
    save_checkpoint(c.out_dir / "checkpoint.json", ck);
    write_text(c.out_dir / "history.csv", history_csv(history));
    out << "train: " << kind << " model, best epoch " << best << ", validation NSE " << format_number(val) << '\n';
}

EvalReport monthly_report(const std::string& station, const NseResult& r) {
    return summarize({{station, r.value, r.n_obs, r.reason}});
}

void cmd_evaluate(const RunConfig& c, std::ostream& out) {
    const json& s = c.settings;
    const RawData d = load_data(c.data_dir, s);
    const auto any = load_checkpoint(c.checkpoint);
    EvalReport rep;
    if (const auto* m = std::get_if<TrainedModel>(&any)) {
        const Dataset ds = make_dataset(d, m->spec.split);
        rep = evaluate(*m, ds, range_of(m->spec.split, s), c.threads);
    } else {
        const SplitSpec split = resolve_split(s, d);
        const auto range = range_of(split, s);
        if (const auto* h = std::get_if<HybridModel>(&any)) {
            const auto in = hybrid_inputs(d, h->station_id, s.value("precip_channel", std::string("precip_mm")));
            const auto samples = build_monthly_samples(in.observed, in.precip, in.natural, range, h->norm);
            rep = monthly_report(h->station_id, monthly_nse(h->params, h->norm, samples));
        } else {
            const auto& sm = std::get<SeasonalModel>(any);
            const auto samples = build_seasonal_samples(monthly_channels(d, sm.station_id), sm.spec, sm.norm, range);
            const auto& tm = sm.norm.at("discharge_m3s");
            std::vector<double> obs, pred;
            const Eigen::MatrixXd z = seasonal_predict_batch(sm.params, samples);
            for (std::size_t i = 0; i < samples.size(); ++i) {
                for (Eigen::Index k = 0; k < z.cols(); ++k) {
                    obs.push_back(samples[i].targets_m3s(k));
                    pred.push_back(z(static_cast<Eigen::Index>(i), k) * tm.std + tm.mean);
                }
            }
            rep = monthly_report(sm.station_id, nse(obs, pred));
        }
    }
    write_report(c.out_dir, rep, d.coords);
    out << "evaluate: mean NSE " << format_number(rep.mean_nse) << ", median NSE " << format_number(rep.median_nse)
        << ", " << rep.n_below_zero << " stations below zero\n";
}

void cmd_forecast(const RunConfig& c, std::ostream& out) {
    const json& s = c.settings;
    const RawData d = load_data(c.data_dir, s);
    const auto any = load_checkpoint(c.checkpoint);
    const bool is_daily = std::holds_alternative<TrainedModel>(any);
    const std::string mode = s.value("mode", std::string(is_daily ? "daily" : "seasonal"));
    if (mode == "daily") {
        const auto* m = std::get_if<TrainedModel>(&any);
        if (!m) throw Error("daily forecasts need a daily checkpoint");
        const Dataset ds = make_dataset(d, m->spec.split);
        const auto series = predict_series(*m, ds, range_of(m->spec.split, s), c.threads);
        std::string csv = "date,station_id,prediction_m3s,observed_m3s\n";
        for (const auto& ps : series) {
            for (std::size_t i = 0; i < ps.dates.length; ++i) {
                csv += ps.dates.at(i).iso() + ',' + ps.station_id + ',' + format_number(ps.predicted[i]) + ',' +
                       format_number(ps.observed[i]) + '\n';
            }
        }
        write_text(c.out_dir / "predictions.csv", csv);
        out << "forecast: daily predictions for " << series.size() << " stations\n";
        return;
    }
    if (!s.contains("origin")) throw Error("seasonal forecasts need --origin YYYY-MM");
    YearMonth origin;
    try {
        origin = YearMonth::parse(s["origin"].get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw Error(std::string("bad origin month: ") + e.what());
    }
    std::string csv = "month,prediction_m3s\n";
    if (const auto* sm = std::get_if<SeasonalModel>(&any)) {
        const auto [hind, drivers] = seasonal_inputs(monthly_channels(d, sm->station_id), sm->spec, sm->norm, origin);
        const auto pred = forecast_m3s(*sm, hind, drivers);
        for (std::size_t k = 0; k < pred.size(); ++k) {
            csv += (origin + static_cast<std::int64_t>(k)).iso() + ',' + format_number(pred[k]) + '\n';
        }
    } else if (const auto* h = std::get_if<HybridModel>(&any)) {
        const auto in = hybrid_inputs(d, h->station_id, s.value("precip_channel", std::string("precip_mm")));
        MonthlySeries target = in.observed;
        // the target month need not be observed yet: forecast from inputs only
        const auto o = target.offset(origin);
        if (o < 0) throw Error("origin " + origin.iso() + " lies outside the observed monthly record");
        target.missing[static_cast<std::size_t>(o)] = false;
        if (std::isnan(target.values[static_cast<std::size_t>(o)])) target.values[static_cast<std::size_t>(o)] = 0.0;
        const DateRange one{origin.first_day(), origin.first_day()};
        const auto samples = build_monthly_samples(target, in.precip, in.natural, one, h->norm);
        if (samples.empty()) throw Error("the 12 months before " + origin.iso() + " are incomplete");
        csv += origin.iso() + ',' + format_number(predict_monthly(h->params, h->norm, samples).front()) + '\n';
    } else {
        throw Error("seasonal forecasts need a seasonal or hybrid checkpoint");
    }
    write_text(c.out_dir / "forecast.csv", csv);
    out << "forecast: seasonal forecast from " << origin.iso() << '\n';
}

void cmd_report(const RunConfig& c, std::ostream& out) {
    const auto names = c.settings.value("names", std::vector<std::string>{});
    if (!names.empty() && names.size() != c.inputs.size()) throw Error("--names must match --inputs");
    std::string csv = "experiment,mean_nse,median_nse,n_below_zero,n_defined\n";
    json table = json::array();
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        const fs::path p = c.inputs[i];
        const json r = read_json_file(p);
        for (const char* k : {"mean_nse", "median_nse", "n_below_zero", "n_defined"}) {
            if (!r.contains(k)) throw Error(p.string() + " is not an evaluation report (missing '" + k + "')");
        }
        const std::string name = names.empty() ? p.parent_path().filename().string() : names[i];
        csv += name + ',' + format_number(r["mean_nse"].get<double>()) + ',' +
               format_number(r["median_nse"].get<double>()) + ',' + std::to_string(r["n_below_zero"].get<int>()) + ',' +
               std::to_string(r["n_defined"].get<int>()) + '\n';
        table.push_back({{"experiment", name},
                         {"mean_nse", r["mean_nse"]},
                         {"median_nse", r["median_nse"]},
                         {"n_below_zero", r["n_below_zero"]},
                         {"n_defined", r["n_defined"]}});
    }
    write_text(c.out_dir / "summary.csv", csv);
    write_text(c.out_dir / "summary.json", table.dump(2) + '\n');
    out << "report: " << c.inputs.size() << " experiments tabulated\n";
}

void cmd_gradcheck(const RunConfig& c, std::ostream& out) {
    const json& s = c.settings;
    const auto H = s.value("h", Eigen::Index{4});
    const auto F = s.value("f", Eigen::Index{3});
    const auto L = s.value("l", Eigen::Index{5});
    const double eps = s.value("eps", 1e-5);
    const std::uint64_t seed = c.seed.value_or(0);
    const LstmParams p = init_params(H, F, seed);
    std::mt19937_64 gen(derive_seed(seed, "gradcheck-input"));
    std::normal_distribution<double> nd(0.0, 1.0);
    auto frame = std::make_shared<Eigen::MatrixXd>(L, F);
    for (Eigen::Index r = 0; r < L; ++r)
        for (Eigen::Index k = 0; k < F; ++k) (*frame)(r, k) = nd(gen);
    const WindowSample sample{"gradcheck", frame, 0, L, nd(gen), Date{}};
    const double err = grad_check(p, sample, eps);
    out << "max_relative_error " << format_number(err) << '\n';
    if (!(err < 1e-4)) throw Error("gradient check failed: max relative error " + format_number(err) + " >= 1e-4");
}

void append_log(const RunConfig& c, const std::string& outcome, int code) {
    const fs::path dir = c.out_dir.empty() ? fs::current_path() : c.out_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream log(dir / "runs.log", std::ios::app);
    log << "command=" << c.command << " config_hash=" << config_hash(json{{"command", c.command}, {"settings", c.settings}})
        << " seed=" << (c.seed ? std::to_string(*c.seed) : std::string("none")) << " threads=" << c.threads
        << " outcome=" << outcome << " exit=" << code << '\n';
}

}  // namespace

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    int code = 0;
    std::string outcome = "ok";
    try {
        if (config.command == "synth") {
            cmd_synth(config, out);
        } else if (config.command == "train") {
            cmd_train(config, out);
        } else if (config.command == "evaluate") {
            cmd_evaluate(config, out);
        } else if (config.command == "forecast") {
            cmd_forecast(config, out);
        } else if (config.command == "report") {
            cmd_report(config, out);
        } else if (config.command == "gradcheck") {
            cmd_gradcheck(config, out);
        } else {
            throw Error("unknown command '" + config.command + "'");
        }
    } catch (const std::exception& e) {
        code = 1;
        outcome = "error";
        const json j{{"error", {{"command", config.command}, {"message", e.what()}}}};
        err << j.dump() << '\n';
        if (!config.out_dir.empty()) {
            std::error_code ec;
            fs::create_directories(config.out_dir, ec);
            std::ofstream(config.out_dir / "error.json", std::ios::binary) << j.dump(2) << '\n';
        }
    }
    append_log(config, outcome, code);
    return code;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = parse_args(argc, argv);
    } catch (const UsageError& e) {
        if (std::string(e.what()).empty()) {
            out << e.usage();
            return 0;
        }
        err << "error: " << e.what() << "\n\n" << e.usage();
        return 2;
    }
    return run(cfg, out, err);
}

}  // namespace hydroseq::cli
