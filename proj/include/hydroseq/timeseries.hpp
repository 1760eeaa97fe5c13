#pragma once

/**
 * @file timeseries.hpp
 * @brief Daily station series: ingest, alignment, normalization, windowing, monthly aggregation.
 *
 * Missing values are represented as quiet NaN throughout; every series also keeps an
 * explicit mask where the file format distinguishes "absent" from "rejected".
 */

#include "hydroseq/dates.hpp"
#include "hydroseq/error.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace hydroseq {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kStdFloor = 1e-8;

/// One station's daily discharge [m³/s] with quality codes and missing mask.
struct GaugeSeries {
    std::string station_id;
    DateIndex dates;
    std::vector<double> discharge;  ///< NaN where masked
    std::vector<std::string> quality;
    std::vector<bool> missing;

    std::size_t unmasked_count() const;
    bool is_valid(std::size_t i) const { return !missing[i]; }
};

/// Named daily channel. Unit is encoded in the name suffix (`_mm`, `_k`, `_jm2`, `_pa`).
struct Channel {
    std::string name;
    std::vector<double> values;  ///< NaN where missing
};

struct ForcingSeries {
    std::string station_id;
    DateIndex dates;
    std::vector<Channel> channels;

    const Channel* find(const std::string& name) const;
};

struct StaticAttributes {
    std::string station_id;
    std::vector<std::string> names;
    std::vector<double> values;

    std::optional<double> get(const std::string& name) const;
};

/// Daily "level below max" fraction for one dam; NaN where absent.
struct DamLevelSeries {
    std::string dam_id;
    DateIndex dates;
    std::vector<double> level;
};

enum class SplitLabel { train, validation, test };
const char* to_string(SplitLabel s);

struct SplitSpec {
    DateRange train;
    DateRange validation;
    DateRange test;

    /// Throws Error unless each range is non-empty and train < validation < test.
    void validate() const;
    const DateRange& range(SplitLabel s) const;
    DateRange covering() const { return {train.first, test.last}; }
};

/// Gauge, forcing and (optional) static attributes of one accepted station, on the dataset calendar.
struct StationData {
    std::string id;
    GaugeSeries gauge;
    ForcingSeries forcing;
    std::optional<StaticAttributes> statics;
};

struct Exclusion {
    std::string station_id;
    std::string reason;
};

struct Dataset {
    DateIndex dates;
    SplitSpec split;
    std::vector<StationData> stations;  ///< sorted by id
    std::vector<DamLevelSeries> dams;   ///< sorted by dam_id, re-indexed onto `dates`
    std::vector<Exclusion> excluded;
    bool normalized = false;

    const StationData& station(const std::string& id) const;
    const DamLevelSeries* dam(const std::string& dam_id) const;
    std::vector<std::string> station_ids() const;
};

struct Moments {
    double mean = 0.0;
    double std = 1.0;
    bool floored = false;  ///< std hit kStdFloor (constant input)
};

/// Population moments of the finite entries (std floored at kStdFloor). Needs 2 finite values.
Moments fit_moments(std::span<const double> values);

/**
 * Standardization statistics fitted on the train range.
 *
 * Driver channels, static attributes and dam levels (keyed `dam:<id>`) are pooled over all
 * stations. Discharge is standardized per station, optionally after log1p.
 */
struct NormStats {
    std::map<std::string, Moments> channels;
    std::map<std::string, Moments> discharge;
    std::string fitted_on = "train";
    bool log1p_discharge = false;
    std::vector<std::string> flagged;  ///< names whose std was floored

    double normalize_discharge(const std::string& station, double q) const;
    double denormalize_discharge(const std::string& station, double z) const;
};

/// Key under which dam levels appear in NormStats and feature schemas.
std::string dam_feature_name(const std::string& dam_id);

enum class Direction { forward, inverse };

/**
 * Missing-input handling inside a window: gaps of at most `max_gap` consecutive days
 * are linearly interpolated; longer gaps, or more than `max_masked_fraction` masked rows,
 * drop the window.
 */
struct MissingPolicy {
    std::size_t max_gap = 3;
    double max_masked_fraction = 0.10;
};

/**
 * One sequence-to-value training example. `inputs()` is an L×F view into a shared frame,
 * so windows that need no gap filling cost no copy.
 */
struct WindowSample {
    std::string station_id;
    std::shared_ptr<const Eigen::MatrixXd> frame;
    Eigen::Index first_row = 0;
    Eigen::Index length = 0;
    double target = 0.0;
    Date target_date;

    auto inputs() const { return frame->middleRows(first_row, length); }
};

// ---- ingest ---------------------------------------------------------------

/// Empty set means "accept every code".
using QualityAllowlist = std::set<std::string>;

GaugeSeries parse_gauge_csv(const std::filesystem::path& path, const QualityAllowlist& allowlist = {},
                            std::optional<std::string> station_id = std::nullopt);
ForcingSeries parse_forcing_csv(const std::filesystem::path& path,
                                std::optional<std::string> station_id = std::nullopt);
std::vector<StaticAttributes> parse_static_csv(const std::filesystem::path& path);
std::vector<DamLevelSeries> parse_dam_csv(const std::filesystem::path& path);

void write_gauge_csv(const std::filesystem::path& path, const GaugeSeries& g);
void write_forcing_csv(const std::filesystem::path& path, const ForcingSeries& f);
void write_static_csv(const std::filesystem::path& path, const std::vector<StaticAttributes>& s);
void write_dam_csv(const std::filesystem::path& path, const std::vector<DamLevelSeries>& dams);

/// Shortest decimal text that parses back to exactly `v`; empty for NaN.
std::string format_number(double v);

// ---- dataset --------------------------------------------------------------

/**
 * Aligns gauges and forcings onto the calendar covering the split.
 *
 * A station is rejected (and reported in `Dataset::excluded`) when it has no forcing,
 * when its forcing does not cover the whole calendar, or when its gauge has no unmasked
 * observation in one of the split ranges.
 */
Dataset build_dataset(const std::vector<GaugeSeries>& gauges, const std::vector<ForcingSeries>& forcings,
                      const std::vector<StaticAttributes>& statics, const SplitSpec& split,
                      const std::vector<DamLevelSeries>& dams = {});

NormStats fit_normalizer(const Dataset& dataset, bool log1p_discharge = false);
Dataset transform(const NormStats& stats, const Dataset& dataset, Direction direction);

/**
 * Frames every (station, target day) pair with `target_date` in `split_range`.
 * Inputs are days t-L..t-1 in `schema` order; the target is day t.
 */
std::vector<WindowSample> make_windows(const Dataset& dataset, std::size_t sequence_length,
                                       const std::vector<std::string>& schema, const DateRange& split_range,
                                       const MissingPolicy& policy = {},
                                       const std::vector<std::string>& stations = {});

/// Station feature matrix (days × schema) with NaN where missing. Unknown names throw Error.
Eigen::MatrixXd feature_matrix(const Dataset& dataset, const StationData& station,
                               const std::vector<std::string>& schema);

// ---- monthly --------------------------------------------------------------

struct MonthlySeries {
    std::string station_id;
    std::string name;
    YearMonth start;
    std::vector<double> values;  ///< NaN where masked
    std::vector<bool> missing;

    std::size_t size() const { return values.size(); }
    YearMonth month_at(std::size_t i) const { return start + static_cast<std::int64_t>(i); }
    /// Index of `m`, or -1 when outside.
    std::int64_t offset(YearMonth m) const;
};

/// Depth channels (`_mm` suffix) aggregate by sum; everything else by mean.
bool is_depth_channel(const std::string& name);

MonthlySeries monthly_aggregate(const GaugeSeries& series, double max_masked_fraction = 0.20);
std::vector<MonthlySeries> monthly_aggregate(const ForcingSeries& series, double max_masked_fraction = 0.20);
MonthlySeries monthly_aggregate(const std::string& station_id, const Channel& channel, const DateIndex& dates,
                                double max_masked_fraction = 0.20);

std::vector<MonthlySeries> parse_natural_monthly_csv(const std::filesystem::path& path);
void write_natural_monthly_csv(const std::filesystem::path& path, const std::vector<MonthlySeries>& series);

}  // namespace hydroseq
