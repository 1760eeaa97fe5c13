#pragma once

/**
 * @file metrics.hpp
 * @brief Nash–Sutcliffe efficiency and basin-level summaries.
 */

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hydroseq {

/// NSE over jointly finite pairs. `value` is empty when undefined; `reason` says why.
struct NseResult {
    std::optional<double> value;
    std::size_t n_obs = 0;
    std::string reason;
};

/**
 * NSE = 1 - Σ(o-p)² / Σ(o-ō)² over pairs where both series are finite (NaN marks
 * masked days). Undefined with fewer than 2 pairs or zero observed variance.
 * Throws Error on length mismatch.
 */
NseResult nse(std::span<const double> observed, std::span<const double> predicted);

struct StationScore {
    std::string station_id;
    std::optional<double> nse;
    std::size_t n_obs = 0;
    std::string reason;  ///< set when nse is undefined
};

struct CdfPoint {
    double nse = 0.0;
    double probability = 0.0;
};

struct EvalReport {
    std::vector<StationScore> stations;  ///< sorted by station_id
    double mean_nse = 0.0;
    double median_nse = 0.0;
    std::size_t n_below_zero = 0;
    std::size_t n_defined = 0;
    std::vector<CdfPoint> cdf;
    std::vector<std::pair<std::string, std::string>> undefined_stations;
};

/// Ascending values with probability i/N for the i-th (1-based); ties keep input order.
std::vector<CdfPoint> cdf_points(std::span<const double> values);

/// Median of the sorted values; even counts average the two middle values.
double median(std::vector<double> values);

/// Throws Error when no station has a defined NSE.
EvalReport summarize(std::vector<StationScore> scores);

struct Coordinates {
    double lat = 0.0;
    double lon = 0.0;
};

nlohmann::json to_json(const EvalReport& report);

/**
 * Writes `report.json`, `nse_by_station.csv` and `nse_cdf.csv` into `dir`.
 * `nse_by_station.csv` gains `lat,lon` columns when `coords` is non-empty.
 */
void write_report(const std::filesystem::path& dir, const EvalReport& report,
                  const std::map<std::string, Coordinates>& coords = {});

/// Reads `station_id,lat,lon`.
std::map<std::string, Coordinates> parse_coordinates_csv(const std::filesystem::path& path);

}  // namespace hydroseq
