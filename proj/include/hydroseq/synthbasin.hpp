#pragma once

/**
 * @file synthbasin.hpp
 * @brief Synthetic regulated basins: seasonal stochastic forcing, linear-reservoir runoff,
 *        dam regulation, and export in the ingest file formats.
 *
 * Units: precipitation and storage are catchment depths [mm/day, mm]; discharge exported
 * to gauge files is m³/s, converted as Q[m³/s] = Q[mm/day] · area[km²] · 1000 / 86400.
 * Dams work in flow-days: a capacity of 100 holds 100 days of 1 m³/s.
 */

#include "hydroseq/timeseries.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hydroseq::synth {

struct Climate {
    double mean_precip_mm = 3.0;      ///< long-run mean daily depth
    double seasonal_amplitude = 0.6;  ///< relative modulation of the wet-day probability
    double wet_day_probability = 0.3;
    double gamma_shape = 0.8;         ///< wet-day depth ~ Gamma(shape, scale), scale set by the mean
    double phase_days = 0.0;          ///< day of year of the wettest point minus 91
    double temp_mean_k = 293.0;
    double temp_amplitude_k = 6.0;
    double temp_noise_k = 1.0;

    /// Gamma scale such that p_wet · shape · scale == mean_precip_mm.
    double gamma_scale() const;
};

/// Measurement error of a precipitation product relative to the true depth.
struct ProductError {
    double noise_std = 0.0;   ///< multiplicative lognormal σ on wet days
    double miss_prob = 0.0;   ///< probability a wet day is recorded as dry
};

struct BasinSpec {
    std::string basin_id;
    double area_km2 = 1000.0;
    double runoff_coefficient = 0.5;   ///< r ∈ (0, 1]
    double storage_coefficient = 0.1;  ///< k ∈ (0, 1)
    Climate climate;
    double noise_std = 0.1;            ///< multiplicative lognormal σ on observed discharge
    ProductError chirps;               ///< `precip_mm` channel
    ProductError era5;                 ///< `tp_mm` channel
    double missing_fraction = 0.0;     ///< iid probability an observed day is missing
    double abstraction_m3s = 0.0;      ///< constant withdrawal from observed flow
    double lat = 0.0;
    double lon = 0.0;

    void validate() const;
};

struct DamSpec {
    std::string dam_id;
    double capacity = 100.0;
    double target_release = 1.0;
    double initial_storage = 0.0;

    void validate() const;
};

/// Every generated driver for one basin, on one calendar.
struct SynthForcing {
    DateIndex dates;
    std::vector<double> precip_true;  ///< drives the reservoir
    std::vector<double> precip_chirps;
    std::vector<double> precip_era5;
    std::vector<double> t2m_k;
    std::vector<double> ssr_jm2;
    std::vector<double> str_jm2;
    std::vector<double> sp_pa;
};

SynthForcing gen_forcing(const BasinSpec& spec, Date start, std::size_t days, std::uint64_t seed);

struct ReservoirRun {
    std::vector<double> discharge;  ///< Q_t [mm/day]
    std::vector<double> storage;    ///< S_0 .. S_T (length T+1)
};

/// Q_t = k·S_t; S_{t+1} = S_t + r·P_t − Q_t; S_0 = `initial_storage`.
ReservoirRun linear_reservoir(std::span<const double> precip, double runoff_coefficient, double storage_coefficient,
                              double initial_storage = 0.0);
ReservoirRun linear_reservoir(std::span<const double> precip, const BasinSpec& spec);

double mm_per_day_to_m3s(double q_mm, double area_km2);

struct DamRun {
    std::vector<double> outflow;
    std::vector<double> level_below_max;  ///< (capacity − storage)/capacity after each day
    std::vector<double> storage;          ///< end-of-day storage
};

/// Per day: store inflow, release min(target, storage), spill any excess over capacity.
DamRun apply_dam(std::span<const double> inflow, const DamSpec& dam);

/// Ground truth of one basin plus what an observer would record.
struct SynthRecord {
    std::string basin_id;
    SynthForcing forcing;
    std::vector<double> natural_m3s;
    std::vector<double> regulated_m3s;    ///< equals natural when no dam
    std::vector<double> level_below_max;  ///< empty when no dam
    std::optional<std::string> dam_id;
};

struct SynthDataset {
    SplitSpec split;
    std::vector<BasinSpec> basins;
    std::map<std::string, DamSpec> dams;  ///< keyed by basin_id
    std::uint64_t seed = 0;
    std::vector<SynthRecord> truth;
    std::vector<GaugeSeries> gauges;
    std::vector<ForcingSeries> forcings;
    std::vector<StaticAttributes> statics;
    std::vector<DamLevelSeries> dam_levels;
    std::vector<MonthlySeries> natural_monthly;

    Dataset to_dataset() const;
};

/// Static attributes are exact functions of the basin parameters and climate.
StaticAttributes static_attributes(const BasinSpec& spec);

/**
 * Generates all basins on the calendar starting at `split.train.first` and running
 * `days` days. `dams` maps basin_id to the dam directly upstream of its gauge.
 */
SynthDataset generate(const std::vector<BasinSpec>& basins, const std::map<std::string, DamSpec>& dams,
                      std::size_t days, const SplitSpec& split, std::uint64_t seed);

/**
 * File layout under `out_dir`:
 *   gauges/<id>.csv, forcing/<id>.csv, static_attributes.csv, dam_levels.csv,
 *   natural_monthly.csv, stations.csv, truth/<id>.csv, manifest.json
 */
void write_dataset(const SynthDataset& data, const std::filesystem::path& out_dir);

SynthDataset make_dataset(const std::vector<BasinSpec>& basins, const std::map<std::string, DamSpec>& dams,
                          std::size_t days, const SplitSpec& split, std::uint64_t seed,
                          const std::filesystem::path& out_dir);

nlohmann::json to_json(const BasinSpec& b);
BasinSpec basin_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DamSpec& d);
DamSpec dam_from_json(const nlohmann::json& j);

}  // namespace hydroseq::synth
