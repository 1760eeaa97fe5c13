#include "hydroseq/metrics.hpp"

#include "hydroseq/error.hpp"
#include "hydroseq/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace hydroseq {

NseResult nse(std::span<const double> observed, std::span<const double> predicted) {
    if (observed.size() != predicted.size()) throw Error("nse: length mismatch");
    NseResult r;
    double sum = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (std::isfinite(observed[i]) && std::isfinite(predicted[i])) {
            sum += observed[i];
            ++r.n_obs;
        }
    }
    if (r.n_obs < 2) {
        r.reason = "fewer than 2 jointly unmasked values";
        return r;
    }
    const double mean = sum / static_cast<double>(r.n_obs);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (!(std::isfinite(observed[i]) && std::isfinite(predicted[i]))) continue;
        const double e = observed[i] - predicted[i];
        const double d = observed[i] - mean;
        num += e * e;
        den += d * d;
    }
    if (!(den > 0.0)) {
        r.reason = "constant observed series";
        return r;
    }
    r.value = 1.0 - num / den;
    return r;
}

std::vector<CdfPoint> cdf_points(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<CdfPoint> out;
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.push_back({values[order[i]], static_cast<double>(i + 1) / n});
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalReport summarize(std::vector<StationScore> scores) {
    std::stable_sort(scores.begin(), scores.end(),
                     [](const StationScore& a, const StationScore& b) { return a.station_id < b.station_id; });
    EvalReport rep;
    std::vector<double> defined;
    for (const auto& s : scores) {
        if (s.nse) {
            defined.push_back(*s.nse);
            if (*s.nse < 0.0) ++rep.n_below_zero;
        } else {
            rep.undefined_stations.emplace_back(s.station_id, s.reason.empty() ? "undefined" : s.reason);
        }
    }
    if (defined.empty()) throw Error("summarize: no station has a defined NSE");
    rep.stations = std::move(scores);
    rep.n_defined = defined.size();
    double sum = 0.0;
    for (double v : defined) sum += v;
    rep.mean_nse = sum / static_cast<double>(defined.size());
    rep.median_nse = median(defined);
    rep.cdf = cdf_points(defined);
    return rep;
}

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json j;
    j["mean_nse"] = report.mean_nse;
    j["median_nse"] = report.median_nse;
    j["n_below_zero"] = report.n_below_zero;
    j["n_defined"] = report.n_defined;
    auto& st = j["stations"] = nlohmann::json::array();
    for (const auto& s : report.stations) {
        nlohmann::json e{{"station_id", s.station_id}, {"n_obs", s.n_obs}};
        e["nse"] = s.nse ? nlohmann::json(*s.nse) : nlohmann::json(nullptr);
        st.push_back(std::move(e));
    }
    auto& cdf = j["cdf"] = nlohmann::json::array();
    for (const auto& p : report.cdf) cdf.push_back({{"nse", p.nse}, {"cum_prob", p.probability}});
    auto& und = j["undefined_stations"] = nlohmann::json::array();
    for (const auto& [id, why] : report.undefined_stations) und.push_back({{"station_id", id}, {"reason", why}});
    return j;
}

void write_report(const std::filesystem::path& dir, const EvalReport& report,
                  const std::map<std::string, Coordinates>& coords) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.json", std::ios::binary);
        if (!out) throw Error("cannot write " + (dir / "report.json").string());
        out << to_json(report).dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "nse_by_station.csv", std::ios::binary);
        const bool with_coords = !coords.empty();
        out << "station_id,nse,n_obs" << (with_coords ? ",lat,lon" : "") << '\n';
        for (const auto& s : report.stations) {
            out << s.station_id << ',' << (s.nse ? format_number(*s.nse) : std::string()) << ',' << s.n_obs;
            if (with_coords) {
                const auto it = coords.find(s.station_id);
                if (it != coords.end()) {
                    out << ',' << format_number(it->second.lat) << ',' << format_number(it->second.lon);
                } else {
                    out << ",,";
                }
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "nse_cdf.csv", std::ios::binary);
        out << "nse,cum_prob\n";
        for (const auto& p : report.cdf) out << format_number(p.nse) << ',' << format_number(p.probability) << '\n';
    }
}

std::map<std::string, Coordinates> parse_coordinates_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::map<std::string, Coordinates> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != "station_id,lat,lon") throw ParseError(path.string(), 1, "expected header 'station_id,lat,lon'");
            continue;
        }
        std::istringstream ss(line);
        std::string id, lat, lon;
        if (!std::getline(ss, id, ',') || !std::getline(ss, lat, ',') || !std::getline(ss, lon)) {
            throw ParseError(path.string(), line_no, "expected 3 fields");
        }
        try {
            out[id] = {std::stod(lat), std::stod(lon)};
        } catch (const std::exception&) {
            throw ParseError(path.string(), line_no, "malformed coordinate");
        }
    }
    return out;
}

}  // namespace hydroseq
