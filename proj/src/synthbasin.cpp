#include "hydroseq/synthbasin.hpp"

#include "hydroseq/checkpoint.hpp"
#include "hydroseq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace hydroseq::synth {

namespace fs = std::filesystem;

double Climate::gamma_scale() const {
    if (wet_day_probability <= 0.0 || gamma_shape <= 0.0) return 0.0;
    return mean_precip_mm / (wet_day_probability * gamma_shape);
}

void BasinSpec::validate() const {
    if (basin_id.empty()) throw Error("basin_id must be non-empty");
    if (!(storage_coefficient > 0.0 && storage_coefficient < 1.0)) {
        throw Error("basin '" + basin_id + "': storage coefficient must lie in (0,1)");
    }
    if (!(runoff_coefficient > 0.0 && runoff_coefficient <= 1.0)) {
        throw Error("basin '" + basin_id + "': runoff coefficient must lie in (0,1]");
    }
    if (!(area_km2 > 0.0)) throw Error("basin '" + basin_id + "': area must be positive");
    if (climate.wet_day_probability < 0.0 || climate.wet_day_probability > 1.0) {
        throw Error("basin '" + basin_id + "': wet-day probability must lie in [0,1]");
    }
    if (noise_std < 0.0 || missing_fraction < 0.0 || missing_fraction >= 1.0) {
        throw Error("basin '" + basin_id + "': invalid noise or missing fraction");
    }
}

void DamSpec::validate() const {
    if (!(capacity > 0.0)) throw Error("dam '" + dam_id + "': capacity must be positive");
    if (initial_storage < 0.0 || initial_storage > capacity) {
        throw Error("dam '" + dam_id + "': initial storage must lie in [0, capacity]");
    }
    if (target_release < 0.0) throw Error("dam '" + dam_id + "': target release must be >= 0");
}

SynthForcing gen_forcing(const BasinSpec& spec, Date start, std::size_t days, std::uint64_t seed) {
    if (days < 1) throw Error("gen_forcing: days must be >= 1");
    const auto& cl = spec.climate;
    const std::string tag = "forcing:" + spec.basin_id;
    std::mt19937_64 rain_gen(derive_seed(seed, tag + ":rain"));
    std::mt19937_64 chirps_gen(derive_seed(seed, tag + ":chirps"));
    std::mt19937_64 era5_gen(derive_seed(seed, tag + ":era5"));
    std::mt19937_64 met_gen(derive_seed(seed, tag + ":met"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = cl.gamma_scale();
    std::gamma_distribution<double> depth(cl.gamma_shape > 0.0 ? cl.gamma_shape : 1.0, scale > 0.0 ? scale : 1.0);

    SynthForcing f;
    f.dates = {start, days};
    auto observe = [&](double p, const ProductError& err, std::mt19937_64& gen) {
        // draw both numbers every day so the stream position never depends on the data
        const double miss = unit(gen);
        const double z = normal(gen);
        if (p <= 0.0 || miss < err.miss_prob) return 0.0;
        return err.noise_std > 0.0 ? p * std::exp(err.noise_std * z - 0.5 * err.noise_std * err.noise_std) : p;
    };
    for (std::size_t i = 0; i < days; ++i) {
        const Date d = f.dates.at(i);
        const double doy = static_cast<double>(d - Date::from_ymd(d.year(), 1, 1));
        const double season = std::sin(2.0 * std::numbers::pi * (doy - cl.phase_days) / 365.25);
        const double p_wet = std::clamp(cl.wet_day_probability * (1.0 + cl.seasonal_amplitude * season), 0.0, 1.0);
        const bool wet = unit(rain_gen) < p_wet;
        const double amount = depth(rain_gen);
        const double p = (wet && scale > 0.0) ? amount : 0.0;
        f.precip_true.push_back(p);
        f.precip_chirps.push_back(observe(p, spec.chirps, chirps_gen));
        f.precip_era5.push_back(observe(p, spec.era5, era5_gen));

        const double z1 = normal(met_gen), z2 = normal(met_gen), z3 = normal(met_gen), z4 = normal(met_gen);
        const double cloud = p > 0.0 ? 1.0 - 0.4 * (1.0 - std::exp(-p / 10.0)) : 1.0;
        f.t2m_k.push_back(cl.temp_mean_k + cl.temp_amplitude_k * season + cl.temp_noise_k * z1 - (p > 0.0 ? 1.0 : 0.0));
        f.ssr_jm2.push_back(1.6e7 * (1.0 + 0.25 * season) * cloud * (1.0 + 0.03 * z2));
        f.str_jm2.push_back(-6.0e6 * cloud * (1.0 + 0.05 * z3));
        f.sp_pa.push_back(9.0e4 - 150.0 * std::min(p, 20.0) / 20.0 + 120.0 * z4);
    }
    return f;
}

ReservoirRun linear_reservoir(std::span<const double> precip, double runoff_coefficient, double storage_coefficient,
                              double initial_storage) {
    if (!(storage_coefficient > 0.0 && storage_coefficient < 1.0)) {
        throw Error("linear_reservoir: storage coefficient must lie in (0,1)");
    }
    ReservoirRun run;
    run.discharge.reserve(precip.size());
    run.storage.reserve(precip.size() + 1);
    double s = initial_storage;
    run.storage.push_back(s);
    for (double p : precip) {
        const double q = storage_coefficient * s;
        s = s + runoff_coefficient * p - q;
        run.discharge.push_back(q);
        run.storage.push_back(s);
    }
    return run;
}

ReservoirRun linear_reservoir(std::span<const double> precip, const BasinSpec& spec) {
    return linear_reservoir(precip, spec.runoff_coefficient, spec.storage_coefficient);
}

double mm_per_day_to_m3s(double q_mm, double area_km2) { return q_mm * area_km2 * 1000.0 / 86400.0; }

DamRun apply_dam(std::span<const double> inflow, const DamSpec& dam) {
    dam.validate();
    DamRun run;
    double storage = dam.initial_storage;
    for (double in : inflow) {
        if (in < 0.0) throw Error("apply_dam: negative inflow");
        storage += in;
        double release = std::min(dam.target_release, storage);
        storage -= release;
        const double spill = std::max(storage - dam.capacity, 0.0);
        release += spill;
        storage -= spill;
        run.outflow.push_back(release);
        run.storage.push_back(storage);
        run.level_below_max.push_back(std::clamp((dam.capacity - storage) / dam.capacity, 0.0, 1.0));
    }
    return run;
}

StaticAttributes static_attributes(const BasinSpec& spec) {
    const auto& cl = spec.climate;
    const double pet_mm = 0.15 * (cl.temp_mean_k - 273.15);
    StaticAttributes s;
    s.station_id = spec.basin_id;
    s.names = {"area_km2", "p_mean_mm", "aridity", "wet_day_freq", "p_seasonality", "runoff_ratio", "slope_mean"};
    s.values = {spec.area_km2,
                cl.mean_precip_mm,
                cl.mean_precip_mm > 0.0 ? pet_mm / cl.mean_precip_mm : 0.0,
                cl.wet_day_probability,
                cl.seasonal_amplitude,
                spec.runoff_coefficient,
                100.0 * spec.storage_coefficient};
    return s;
}

SynthDataset generate(const std::vector<BasinSpec>& basins, const std::map<std::string, DamSpec>& dams,
                      std::size_t days, const SplitSpec& split, std::uint64_t seed) {
    if (basins.empty()) throw Error("synth: need at least one basin");
    split.validate();
    const Date start = split.train.first;
    if (static_cast<std::int64_t>(days) < split.covering().days()) {
        throw Error("synth: " + std::to_string(days) + " days do not cover the split ending " + split.test.last.iso());
    }
    SynthDataset out;
    out.split = split;
    out.basins = basins;
    out.dams = dams;
    out.seed = seed;
    for (const auto& [basin, dam] : dams) {
        dam.validate();
        if (std::none_of(basins.begin(), basins.end(), [&](const BasinSpec& b) { return b.basin_id == basin; })) {
            throw Error("synth: dam '" + dam.dam_id + "' assigned to unknown basin '" + basin + "'");
        }
    }

    for (const auto& spec : basins) {
        spec.validate();
        SynthRecord rec;
        rec.basin_id = spec.basin_id;
        rec.forcing = gen_forcing(spec, start, days, seed);
        const auto run = linear_reservoir(rec.forcing.precip_true, spec);
        for (double q : run.discharge) rec.natural_m3s.push_back(mm_per_day_to_m3s(q, spec.area_km2));
        rec.regulated_m3s = rec.natural_m3s;
        if (const auto it = dams.find(spec.basin_id); it != dams.end()) {
            const auto dr = apply_dam(rec.natural_m3s, it->second);
            rec.regulated_m3s = dr.outflow;
            rec.level_below_max = dr.level_below_max;
            rec.dam_id = it->second.dam_id;
            out.dam_levels.push_back({it->second.dam_id, rec.forcing.dates, dr.level_below_max});
        }

        GaugeSeries g;
        g.station_id = spec.basin_id;
        g.dates = rec.forcing.dates;
        std::mt19937_64 obs_gen(derive_seed(seed, "observe:" + spec.basin_id));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t i = 0; i < days; ++i) {
            const double z = normal(obs_gen);
            const bool drop = unit(obs_gen) < spec.missing_fraction;
            double q = rec.regulated_m3s[i];
            if (spec.abstraction_m3s > 0.0) q = std::max(q - spec.abstraction_m3s, 0.0);
            if (spec.noise_std > 0.0) q *= std::exp(spec.noise_std * z - 0.5 * spec.noise_std * spec.noise_std);
            g.discharge.push_back(drop ? kMissing : q);
            g.missing.push_back(drop);
            g.quality.push_back(drop ? "M" : "A");
        }
        out.gauges.push_back(std::move(g));

        ForcingSeries f;
        f.station_id = spec.basin_id;
        f.dates = rec.forcing.dates;
        f.channels = {{"precip_mm", rec.forcing.precip_chirps}, {"t2m_k", rec.forcing.t2m_k},
                      {"ssr_jm2", rec.forcing.ssr_jm2},         {"str_jm2", rec.forcing.str_jm2},
                      {"tp_mm", rec.forcing.precip_era5},       {"sp_pa", rec.forcing.sp_pa}};
        out.forcings.push_back(std::move(f));
        out.statics.push_back(static_attributes(spec));

        auto monthly = monthly_aggregate(spec.basin_id, Channel{"natural_q_m3s", rec.natural_m3s}, rec.forcing.dates);
        out.natural_monthly.push_back(std::move(monthly));
        out.truth.push_back(std::move(rec));
    }
    std::sort(out.dam_levels.begin(), out.dam_levels.end(),
              [](const auto& a, const auto& b) { return a.dam_id < b.dam_id; });
    return out;
}

Dataset SynthDataset::to_dataset() const { return build_dataset(gauges, forcings, statics, split, dam_levels); }

void write_dataset(const SynthDataset& data, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw Error("cannot create output directory " + out_dir.string());
    for (const auto& g : data.gauges) write_gauge_csv(out_dir / "gauges" / (g.station_id + ".csv"), g);
    for (const auto& f : data.forcings) write_forcing_csv(out_dir / "forcing" / (f.station_id + ".csv"), f);
    write_static_csv(out_dir / "static_attributes.csv", data.statics);
    if (!data.dam_levels.empty()) write_dam_csv(out_dir / "dam_levels.csv", data.dam_levels);
    write_natural_monthly_csv(out_dir / "natural_monthly.csv", data.natural_monthly);

    {
        std::ofstream out(out_dir / "stations.csv", std::ios::binary);
        out << "station_id,lat,lon\n";
        for (const auto& b : data.basins) out << b.basin_id << ',' << format_number(b.lat) << ',' << format_number(b.lon) << '\n';
    }
    fs::create_directories(out_dir / "truth");
    for (const auto& t : data.truth) {
        std::ofstream out(out_dir / "truth" / (t.basin_id + ".csv"), std::ios::binary);
        out << "date,precip_true_mm,natural_q_m3s,regulated_q_m3s,level_below_max_frac\n";
        for (std::size_t i = 0; i < t.forcing.dates.length; ++i) {
            out << t.forcing.dates.at(i).iso() << ',' << format_number(t.forcing.precip_true[i]) << ','
                << format_number(t.natural_m3s[i]) << ',' << format_number(t.regulated_m3s[i]) << ','
                << (t.level_below_max.empty() ? std::string() : format_number(t.level_below_max[i])) << '\n';
        }
    }

    nlohmann::json m;
    m["schema_version"] = 1;
    m["seed"] = data.seed;
    m["start"] = data.split.train.first.iso();
    m["days"] = data.truth.front().forcing.dates.length;
    m["split"] = to_json(data.split);
    auto& basins = m["basins"] = nlohmann::json::array();
    for (const auto& b : data.basins) basins.push_back(to_json(b));
    auto& dams = m["dams"] = nlohmann::json::object();
    for (const auto& [basin, d] : data.dams) dams[basin] = to_json(d);
    m["files"] = {{"gauges", "gauges/<station_id>.csv"},
                  {"forcing", "forcing/<station_id>.csv"},
                  {"static", "static_attributes.csv"},
                  {"dam_levels", data.dam_levels.empty() ? "" : "dam_levels.csv"},
                  {"natural_monthly", "natural_monthly.csv"},
                  {"coordinates", "stations.csv"},
                  {"truth", "truth/<station_id>.csv"}};
    std::ofstream out(out_dir / "manifest.json", std::ios::binary);
    if (!out) throw Error("cannot write manifest in " + out_dir.string());
    out << m.dump(2) << '\n';
}

SynthDataset make_dataset(const std::vector<BasinSpec>& basins, const std::map<std::string, DamSpec>& dams,
                          std::size_t days, const SplitSpec& split, std::uint64_t seed, const fs::path& out_dir) {
    auto data = generate(basins, dams, days, split, seed);
    write_dataset(data, out_dir);
    return data;
}

// ---- JSON -----------------------------------------------------------------

namespace {

nlohmann::json to_json(const ProductError& e) { return {{"noise_std", e.noise_std}, {"miss_prob", e.miss_prob}}; }

ProductError product_from_json(const nlohmann::json& j) {
    ProductError e;
    e.noise_std = j.value("noise_std", e.noise_std);
    e.miss_prob = j.value("miss_prob", e.miss_prob);
    return e;
}

}  // namespace

nlohmann::json to_json(const BasinSpec& b) {
    const auto& c = b.climate;
    return {{"basin_id", b.basin_id},
            {"area_km2", b.area_km2},
            {"runoff_coefficient", b.runoff_coefficient},
            {"storage_coefficient", b.storage_coefficient},
            {"climate",
             {{"mean_precip_mm", c.mean_precip_mm},
              {"seasonal_amplitude", c.seasonal_amplitude},
              {"wet_day_probability", c.wet_day_probability},
              {"gamma_shape", c.gamma_shape},
              {"phase_days", c.phase_days},
              {"temp_mean_k", c.temp_mean_k},
              {"temp_amplitude_k", c.temp_amplitude_k},
              {"temp_noise_k", c.temp_noise_k}}},
            {"noise_std", b.noise_std},
            {"chirps", to_json(b.chirps)},
            {"era5", to_json(b.era5)},
            {"missing_fraction", b.missing_fraction},
            {"abstraction_m3s", b.abstraction_m3s},
            {"lat", b.lat},
            {"lon", b.lon}};
}

BasinSpec basin_from_json(const nlohmann::json& j) {
    BasinSpec b;
    b.basin_id = j.at("basin_id").get<std::string>();
    b.area_km2 = j.value("area_km2", b.area_km2);
    b.runoff_coefficient = j.value("runoff_coefficient", b.runoff_coefficient);
    b.storage_coefficient = j.value("storage_coefficient", b.storage_coefficient);
    if (j.contains("climate")) {
        const auto& c = j.at("climate");
        auto& cl = b.climate;
        cl.mean_precip_mm = c.value("mean_precip_mm", cl.mean_precip_mm);
        cl.seasonal_amplitude = c.value("seasonal_amplitude", cl.seasonal_amplitude);
        cl.wet_day_probability = c.value("wet_day_probability", cl.wet_day_probability);
        cl.gamma_shape = c.value("gamma_shape", cl.gamma_shape);
        cl.phase_days = c.value("phase_days", cl.phase_days);
        cl.temp_mean_k = c.value("temp_mean_k", cl.temp_mean_k);
        cl.temp_amplitude_k = c.value("temp_amplitude_k", cl.temp_amplitude_k);
        cl.temp_noise_k = c.value("temp_noise_k", cl.temp_noise_k);
    }
    b.noise_std = j.value("noise_std", b.noise_std);
    if (j.contains("chirps")) b.chirps = product_from_json(j.at("chirps"));
    if (j.contains("era5")) b.era5 = product_from_json(j.at("era5"));
    b.missing_fraction = j.value("missing_fraction", b.missing_fraction);
    b.abstraction_m3s = j.value("abstraction_m3s", b.abstraction_m3s);
    b.lat = j.value("lat", b.lat);
    b.lon = j.value("lon", b.lon);
    b.validate();
    return b;
}

nlohmann::json to_json(const DamSpec& d) {
    return {{"dam_id", d.dam_id},
            {"capacity", d.capacity},
            {"target_release", d.target_release},
            {"initial_storage", d.initial_storage}};
}

DamSpec dam_from_json(const nlohmann::json& j) {
    DamSpec d;
    d.dam_id = j.at("dam_id").get<std::string>();
    d.capacity = j.value("capacity", d.capacity);
    d.target_release = j.value("target_release", d.target_release);
    d.initial_storage = j.value("initial_storage", d.initial_storage);
    d.validate();
    return d;
}

}  // namespace hydroseq::synth
