#include "hydroseq/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace hydroseq {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// Line-oriented CSV reader: strips CR and a UTF-8 BOM, tracks 1-based line numbers.
class CsvReader {
public:
    explicit CsvReader(const fs::path& path) : path_(path.string()), in_(path) {
        if (!in_) throw Error("cannot open " + path_);
    }

    bool next(std::vector<std::string_view>& fields) {
        while (std::getline(in_, line_)) {
            ++line_no_;
            if (line_no_ == 1 && line_.rfind("\xEF\xBB\xBF", 0) == 0) line_.erase(0, 3);
            if (!line_.empty() && line_.back() == '\r') line_.pop_back();
            if (trim(line_).empty()) continue;
            fields = split_fields(line_);
            for (auto& f : fields) f = trim(f);
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }
    std::size_t line() const { return line_no_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

Date parse_date_field(const CsvReader& r, std::string_view field) {
    try {
        return Date::parse(field);
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
}

/// Empty field -> NaN; anything unparsable or non-finite is a parse error.
double parse_value(const CsvReader& r, std::string_view field, const char* what) {
    if (field.empty()) return kMissing;
    double v = 0.0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
        r.fail(std::string("malformed ") + what + " '" + std::string(field) + "'");
    }
    return v;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

void check_unique_ids(const std::vector<std::string>& ids, const char* kind) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second) throw Error(std::string("duplicate ") + kind + " station_id '" + id + "'");
    }
}

std::vector<double> reindex(const std::vector<double>& values, const DateIndex& from, const DateIndex& to) {
    std::vector<double> out(to.length, kMissing);
    for (std::size_t i = 0; i < to.length; ++i) {
        const auto o = from.offset(to.at(i));
        if (o >= 0) out[i] = values[static_cast<std::size_t>(o)];
    }
    return out;
}

bool covers(const DateIndex& idx, const DateRange& r) {
    return idx.length > 0 && idx.start <= r.first && r.last <= idx.last();
}

struct Accumulator {
    std::vector<double> values;

    Moments finish() const {
        Moments m;
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        if (*lo == *hi) {
            m.mean = *lo;
            m.std = kStdFloor;
            m.floored = true;
            return m;
        }
        const double n = static_cast<double>(values.size());
        double sum = 0.0;
        for (double v : values) sum += v;
        m.mean = sum / n;
        double ss = 0.0;
        for (double v : values) ss += (v - m.mean) * (v - m.mean);
        m.std = std::sqrt(ss / n);
        if (m.std < kStdFloor) {
            m.std = kStdFloor;
            m.floored = true;
        }
        return m;
    }
};

}  // namespace

Moments fit_moments(std::span<const double> values) {
    Accumulator acc;
    for (double v : values) {
        if (std::isfinite(v)) acc.values.push_back(v);
    }
    if (acc.values.size() < 2) throw Error("fewer than 2 finite values to fit moments");
    return acc.finish();
}

// ---------------------------------------------------------------------------

std::size_t GaugeSeries::unmasked_count() const {
    return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), false));
}

const Channel* ForcingSeries::find(const std::string& name) const {
    for (const auto& c : channels)
        if (c.name == name) return &c;
    return nullptr;
}

std::optional<double> StaticAttributes::get(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return values[i];
    return std::nullopt;
}

const char* to_string(SplitLabel s) {
    switch (s) {
        case SplitLabel::train: return "train";
        case SplitLabel::validation: return "validation";
        case SplitLabel::test: return "test";
    }
    return "?";
}

void SplitSpec::validate() const {
    for (auto label : {SplitLabel::train, SplitLabel::validation, SplitLabel::test}) {
        const auto& r = range(label);
        if (r.last < r.first) throw Error(std::string("empty ") + to_string(label) + " range");
    }
    if (!(train.last < validation.first) || !(validation.last < test.first)) {
        throw Error("split ranges must be non-overlapping and ordered train < validation < test");
    }
}

const DateRange& SplitSpec::range(SplitLabel s) const {
    switch (s) {
        case SplitLabel::train: return train;
        case SplitLabel::validation: return validation;
        case SplitLabel::test: return test;
    }
    return test;
}

const StationData& Dataset::station(const std::string& id) const {
    for (const auto& s : stations)
        if (s.id == id) return s;
    throw Error("unknown station '" + id + "'");
}

const DamLevelSeries* Dataset::dam(const std::string& dam_id) const {
    for (const auto& d : dams)
        if (d.dam_id == dam_id) return &d;
    return nullptr;
}

std::vector<std::string> Dataset::station_ids() const {
    std::vector<std::string> ids;
    for (const auto& s : stations) ids.push_back(s.id);
    return ids;
}

double NormStats::normalize_discharge(const std::string& station, double q) const {
    const auto it = discharge.find(station);
    if (it == discharge.end()) throw Error("no discharge statistics for station '" + station + "'");
    const double x = log1p_discharge ? std::log1p(q) : q;
    return (x - it->second.mean) / it->second.std;
}

double NormStats::denormalize_discharge(const std::string& station, double z) const {
    const auto it = discharge.find(station);
    if (it == discharge.end()) throw Error("no discharge statistics for station '" + station + "'");
    const double x = z * it->second.std + it->second.mean;
    return log1p_discharge ? std::expm1(x) : x;
}

std::string dam_feature_name(const std::string& dam_id) { return "dam:" + dam_id; }

std::string format_number(double v) {
    if (std::isnan(v)) return {};
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

// ---- ingest ---------------------------------------------------------------

GaugeSeries parse_gauge_csv(const fs::path& path, const QualityAllowlist& allowlist,
                            std::optional<std::string> station_id) {
    CsvReader r(path);
    std::vector<std::string_view> f;
    if (!r.next(f)) r.fail("missing header");
    if (f.size() < 2 || f.size() > 3 || f[0] != "date" || f[1] != "discharge_m3s" ||
        (f.size() == 3 && f[2] != "quality")) {
        r.fail("expected header 'date,discharge_m3s,quality'");
    }

    std::vector<Date> dates;
    std::vector<double> values;
    std::vector<std::string> quality;
    while (r.next(f)) {
        if (f.size() < 2 || f.size() > 3) r.fail("expected 3 fields, got " + std::to_string(f.size()));
        const Date d = parse_date_field(r, f[0]);
        if (!dates.empty() && !(dates.back() < d)) r.fail("non-monotonic date " + d.iso());
        double q = parse_value(r, f[1], "discharge");
        if (q < 0.0) r.fail("negative discharge " + std::string(f[1]));
        std::string code = f.size() == 3 ? std::string(f[2]) : std::string();
        if (!allowlist.empty() && !allowlist.count(code)) q = kMissing;
        dates.push_back(d);
        values.push_back(q);
        quality.push_back(std::move(code));
    }
    if (dates.empty()) r.fail("no data rows");

    GaugeSeries g;
    g.station_id = station_id.value_or(path.stem().string());
    g.dates = {dates.front(), static_cast<std::size_t>(dates.back() - dates.front() + 1)};
    g.discharge.assign(g.dates.length, kMissing);
    g.quality.assign(g.dates.length, std::string());
    g.missing.assign(g.dates.length, true);
    for (std::size_t i = 0; i < dates.size(); ++i) {
        const auto o = static_cast<std::size_t>(g.dates.offset(dates[i]));
        g.discharge[o] = values[i];
        g.quality[o] = std::move(quality[i]);
        g.missing[o] = std::isnan(values[i]);
    }
    return g;
}

ForcingSeries parse_forcing_csv(const fs::path& path, std::optional<std::string> station_id) {
    CsvReader r(path);
    std::vector<std::string_view> f;
    if (!r.next(f)) r.fail("missing header");
    if (f.size() < 2 || f[0] != "date") r.fail("expected header 'date,<channel>...'");

    ForcingSeries out;
    out.station_id = station_id.value_or(path.stem().string());
    std::unordered_set<std::string> names;
    for (std::size_t i = 1; i < f.size(); ++i) {
        std::string name(f[i]);
        if (name.empty() || !names.insert(name).second) r.fail("duplicate or empty channel name '" + name + "'");
        out.channels.push_back({std::move(name), {}});
    }

    std::vector<Date> dates;
    std::vector<std::vector<double>> rows(out.channels.size());
    while (r.next(f)) {
        if (f.size() != out.channels.size() + 1) {
            r.fail("expected " + std::to_string(out.channels.size() + 1) + " fields, got " +
                   std::to_string(f.size()));
        }
        const Date d = parse_date_field(r, f[0]);
        if (!dates.empty() && !(dates.back() < d)) r.fail("non-monotonic date " + d.iso());
        dates.push_back(d);
        for (std::size_t c = 0; c < out.channels.size(); ++c) rows[c].push_back(parse_value(r, f[c + 1], "value"));
    }
    if (dates.empty()) r.fail("no data rows");

    out.dates = {dates.front(), static_cast<std::size_t>(dates.back() - dates.front() + 1)};
    for (std::size_t c = 0; c < out.channels.size(); ++c) {
        auto& v = out.channels[c].values;
        v.assign(out.dates.length, kMissing);
        for (std::size_t i = 0; i < dates.size(); ++i) v[static_cast<std::size_t>(out.dates.offset(dates[i]))] = rows[c][i];
    }
    return out;
}

std::vector<StaticAttributes> parse_static_csv(const fs::path& path) {
    CsvReader r(path);
    std::vector<std::string_view> f;
    if (!r.next(f)) r.fail("missing header");
    if (f.size() < 2 || f[0] != "station_id") r.fail("expected header 'station_id,<attribute>...'");
    std::vector<std::string> names(f.begin() + 1, f.end());

    std::vector<StaticAttributes> out;
    std::unordered_set<std::string> ids;
    while (r.next(f)) {
        if (f.size() != names.size() + 1) r.fail("expected " + std::to_string(names.size() + 1) + " fields");
        StaticAttributes s;
        s.station_id = std::string(f[0]);
        if (!ids.insert(s.station_id).second) r.fail("duplicate station_id '" + s.station_id + "'");
        s.names = names;
        for (std::size_t i = 1; i < f.size(); ++i) {
            const double v = parse_value(r, f[i], "attribute");
            if (std::isnan(v)) r.fail("missing static attribute '" + names[i - 1] + "'");
            s.values.push_back(v);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<DamLevelSeries> parse_dam_csv(const fs::path& path) {
    CsvReader r(path);
    std::vector<std::string_view> f;
    if (!r.next(f)) r.fail("missing header");
    if (f.size() != 3 || f[0] != "date" || f[1] != "dam_id" || f[2] != "level_below_max_frac") {
        r.fail("expected header 'date,dam_id,level_below_max_frac'");
    }
    std::map<std::string, std::vector<std::pair<Date, double>>> rows;
    while (r.next(f)) {
        if (f.size() != 3) r.fail("expected 3 fields");
        const Date d = parse_date_field(r, f[0]);
        const double v = parse_value(r, f[2], "level");
        if (!std::isnan(v) && (v < 0.0 || v > 1.0)) r.fail("level_below_max_frac outside [0,1]");
        auto& series = rows[std::string(f[1])];
        if (!series.empty() && !(series.back().first < d)) r.fail("non-monotonic date " + d.iso());
        series.emplace_back(d, v);
    }
    std::vector<DamLevelSeries> out;
    for (auto& [id, series] : rows) {
        DamLevelSeries dam;
        dam.dam_id = id;
        dam.dates = {series.front().first, static_cast<std::size_t>(series.back().first - series.front().first + 1)};
        dam.level.assign(dam.dates.length, kMissing);
        for (const auto& [d, v] : series) dam.level[static_cast<std::size_t>(dam.dates.offset(d))] = v;
        out.push_back(std::move(dam));
    }
    return out;
}

void write_gauge_csv(const fs::path& path, const GaugeSeries& g) {
    auto out = open_out(path);
    out << "date,discharge_m3s,quality\n";
    for (std::size_t i = 0; i < g.dates.length; ++i) {
        out << g.dates.at(i).iso() << ',' << (g.missing[i] ? std::string() : format_number(g.discharge[i])) << ','
            << g.quality[i] << '\n';
    }
}

void write_forcing_csv(const fs::path& path, const ForcingSeries& f) {
    auto out = open_out(path);
    out << "date";
    for (const auto& c : f.channels) out << ',' << c.name;
    out << '\n';
    for (std::size_t i = 0; i < f.dates.length; ++i) {
        out << f.dates.at(i).iso();
        for (const auto& c : f.channels) out << ',' << format_number(c.values[i]);
        out << '\n';
    }
}

void write_static_csv(const fs::path& path, const std::vector<StaticAttributes>& s) {
    auto out = open_out(path);
    if (s.empty()) return;
    out << "station_id";
    for (const auto& n : s.front().names) out << ',' << n;
    out << '\n';
    for (const auto& row : s) {
        out << row.station_id;
        for (double v : row.values) out << ',' << format_number(v);
        out << '\n';
    }
}

void write_dam_csv(const fs::path& path, const std::vector<DamLevelSeries>& dams) {
    auto out = open_out(path);
    out << "date,dam_id,level_below_max_frac\n";
    for (const auto& d : dams) {
        for (std::size_t i = 0; i < d.dates.length; ++i) {
            out << d.dates.at(i).iso() << ',' << d.dam_id << ',' << format_number(d.level[i]) << '\n';
        }
    }
}

// ---- dataset --------------------------------------------------------------

Dataset build_dataset(const std::vector<GaugeSeries>& gauges, const std::vector<ForcingSeries>& forcings,
                      const std::vector<StaticAttributes>& statics, const SplitSpec& split,
                      const std::vector<DamLevelSeries>& dams) {
    split.validate();
    {
        std::vector<std::string> ids;
        for (const auto& g : gauges) ids.push_back(g.station_id);
        check_unique_ids(ids, "gauge");
        ids.clear();
        for (const auto& f : forcings) ids.push_back(f.station_id);
        check_unique_ids(ids, "forcing");
        ids.clear();
        for (const auto& s : statics) ids.push_back(s.station_id);
        check_unique_ids(ids, "static");
    }
    for (const auto& s : statics) {
        if (s.names.size() != s.values.size()) throw Error("static attributes of '" + s.station_id + "' malformed");
        if (s.names != statics.front().names) throw Error("static attribute names differ between stations");
    }

    Dataset ds;
    ds.split = split;
    const DateRange cal = split.covering();
    ds.dates = {cal.first, static_cast<std::size_t>(cal.days())};

    std::map<std::string, const ForcingSeries*> forcing_by_id;
    for (const auto& f : forcings) forcing_by_id[f.station_id] = &f;
    std::map<std::string, const StaticAttributes*> static_by_id;
    for (const auto& s : statics) static_by_id[s.station_id] = &s;

    std::vector<const GaugeSeries*> order;
    for (const auto& g : gauges) order.push_back(&g);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->station_id < b->station_id; });

    std::unordered_set<std::string> gauged;
    for (const auto* g : order) {
        gauged.insert(g->station_id);
        const auto fit = forcing_by_id.find(g->station_id);
        if (fit == forcing_by_id.end()) {
            ds.excluded.push_back({g->station_id, "no forcing series"});
            continue;
        }
        const ForcingSeries& f = *fit->second;
        if (!covers(f.dates, cal)) {
            ds.excluded.push_back({g->station_id, "forcing does not cover " + cal.first.iso() + ".." + cal.last.iso()});
            continue;
        }
        StationData st;
        st.id = g->station_id;
        st.gauge.station_id = st.id;
        st.gauge.dates = ds.dates;
        st.gauge.discharge = reindex(g->discharge, g->dates, ds.dates);
        st.gauge.missing.resize(ds.dates.length);
        st.gauge.quality.assign(ds.dates.length, std::string());
        for (std::size_t i = 0; i < ds.dates.length; ++i) {
            st.gauge.missing[i] = std::isnan(st.gauge.discharge[i]);
            const auto o = g->dates.offset(ds.dates.at(i));
            if (o >= 0) st.gauge.quality[i] = g->quality[static_cast<std::size_t>(o)];
        }
        std::string gap;
        for (auto label : {SplitLabel::train, SplitLabel::validation, SplitLabel::test}) {
            const auto& r = split.range(label);
            bool any = false;
            for (Date d = r.first; d <= r.last && !any; d = d + 1) any = !st.gauge.missing[static_cast<std::size_t>(ds.dates.offset(d))];
            if (!any) {
                gap = label == SplitLabel::train ? "train" : label == SplitLabel::validation ? "validation" : "test";
                break;
            }
        }
        if (!gap.empty()) {
            ds.excluded.push_back({st.id, "no valid discharge in " + gap + " range"});
            continue;
        }
        st.forcing.station_id = st.id;
        st.forcing.dates = ds.dates;
        for (const auto& c : f.channels) st.forcing.channels.push_back({c.name, reindex(c.values, f.dates, ds.dates)});
        if (const auto sit = static_by_id.find(st.id); sit != static_by_id.end()) st.statics = *sit->second;
        ds.stations.push_back(std::move(st));
    }
    for (const auto& f : forcings) {
        if (!gauged.count(f.station_id)) ds.excluded.push_back({f.station_id, "no gauge series"});
    }
    if (ds.stations.empty()) {
        throw Error("empty intersection: no station covers " + cal.first.iso() + ".." + cal.last.iso());
    }

    for (const auto& d : dams) {
        DamLevelSeries r;
        r.dam_id = d.dam_id;
        r.dates = ds.dates;
        r.level = reindex(d.level, d.dates, ds.dates);
        ds.dams.push_back(std::move(r));
    }
    std::sort(ds.dams.begin(), ds.dams.end(), [](const auto& a, const auto& b) { return a.dam_id < b.dam_id; });
    return ds;
}

NormStats fit_normalizer(const Dataset& dataset, bool log1p_discharge) {
    if (dataset.normalized) throw Error("fit_normalizer expects a dataset in physical units");
    NormStats stats;
    stats.log1p_discharge = log1p_discharge;
    const auto& train = dataset.split.train;
    const auto first = static_cast<std::size_t>(dataset.dates.offset(train.first));
    const auto last = static_cast<std::size_t>(dataset.dates.offset(train.last));

    auto collect = [&](const std::vector<double>& v, Accumulator& acc, const std::string& what) {
        std::size_t n = 0;
        for (std::size_t i = first; i <= last; ++i) {
            if (!std::isnan(v[i])) {
                acc.values.push_back(v[i]);
                ++n;
            }
        }
        if (n < 2) throw Error(what + ": fewer than 2 unmasked values in train range");
    };

    std::map<std::string, Accumulator> channels;
    for (const auto& st : dataset.stations) {
        for (const auto& c : st.forcing.channels) {
            collect(c.values, channels[c.name], "channel '" + c.name + "' at station '" + st.id + "'");
        }
        if (st.statics) {
            for (std::size_t i = 0; i < st.statics->names.size(); ++i) {
                channels[st.statics->names[i]].values.push_back(st.statics->values[i]);
            }
        }
        Accumulator q;
        std::vector<double> raw = st.gauge.discharge;
        if (log1p_discharge) {
            for (double& x : raw)
                if (!std::isnan(x)) x = std::log1p(x);
        }
        collect(raw, q, "discharge at station '" + st.id + "'");
        stats.discharge[st.id] = q.finish();
        if (stats.discharge[st.id].floored) stats.flagged.push_back("discharge:" + st.id);
    }
    for (const auto& d : dataset.dams) {
        collect(d.level, channels[dam_feature_name(d.dam_id)], "dam '" + d.dam_id + "'");
    }
    for (auto& [name, acc] : channels) {
        stats.channels[name] = acc.finish();
        if (stats.channels[name].floored) stats.flagged.push_back(name);
    }
    return stats;
}

Dataset transform(const NormStats& stats, const Dataset& dataset, Direction direction) {
    const bool fwd = direction == Direction::forward;
    if (fwd == dataset.normalized) {
        throw Error(fwd ? "dataset is already normalized" : "dataset is not normalized");
    }
    auto moments = [&](const std::string& name) -> const Moments& {
        const auto it = stats.channels.find(name);
        if (it == stats.channels.end()) throw Error("no normalization statistics for channel '" + name + "'");
        return it->second;
    };
    auto apply = [fwd](double x, const Moments& m) { return fwd ? (x - m.mean) / m.std : x * m.std + m.mean; };

    Dataset out = dataset;
    out.normalized = fwd;
    for (auto& st : out.stations) {
        for (auto& c : st.forcing.channels) {
            const auto& m = moments(c.name);
            for (double& x : c.values)
                if (!std::isnan(x)) x = apply(x, m);
        }
        if (st.statics) {
            for (std::size_t i = 0; i < st.statics->names.size(); ++i) {
                st.statics->values[i] = apply(st.statics->values[i], moments(st.statics->names[i]));
            }
        }
        for (std::size_t i = 0; i < st.gauge.discharge.size(); ++i) {
            if (st.gauge.missing[i]) continue;
            double& q = st.gauge.discharge[i];
            q = fwd ? stats.normalize_discharge(st.id, q) : stats.denormalize_discharge(st.id, q);
        }
    }
    for (auto& d : out.dams) {
        const auto& m = moments(dam_feature_name(d.dam_id));
        for (double& x : d.level)
            if (!std::isnan(x)) x = apply(x, m);
    }
    return out;
}

Eigen::MatrixXd feature_matrix(const Dataset& dataset, const StationData& station,
                               const std::vector<std::string>& schema) {
    const auto n = static_cast<Eigen::Index>(dataset.dates.length);
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(schema.size()));
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto& name = schema[j];
        const auto col = static_cast<Eigen::Index>(j);
        if (const Channel* c = station.forcing.find(name)) {
            for (Eigen::Index i = 0; i < n; ++i) m(i, col) = c->values[static_cast<std::size_t>(i)];
            continue;
        }
        if (station.statics) {
            if (const auto v = station.statics->get(name)) {
                m.col(col).setConstant(*v);
                continue;
            }
        }
        if (name.rfind("dam:", 0) == 0) {
            if (const auto* d = dataset.dam(name.substr(4))) {
                for (Eigen::Index i = 0; i < n; ++i) m(i, col) = d->level[static_cast<std::size_t>(i)];
                continue;
            }
        }
        throw Error("feature '" + name + "' not available for station '" + station.id + "'");
    }
    return m;
}

namespace {

/// Fills NaN runs in one window column. Returns false when a run exceeds `max_gap`
/// or the column has no valid value at all.
bool fill_column(Eigen::Ref<Eigen::VectorXd> col, std::size_t max_gap) {
    const Eigen::Index n = col.size();
    Eigen::Index prev = -1;
    Eigen::Index i = 0;
    while (i < n) {
        if (!std::isnan(col(i))) {
            prev = i++;
            continue;
        }
        Eigen::Index j = i;
        while (j < n && std::isnan(col(j))) ++j;
        if (static_cast<std::size_t>(j - i) > max_gap) return false;
        if (prev < 0 && j >= n) return false;
        for (Eigen::Index k = i; k < j; ++k) {
            if (prev < 0) {
                col(k) = col(j);
            } else if (j >= n) {
                col(k) = col(prev);
            } else {
                const double w = static_cast<double>(k - prev) / static_cast<double>(j - prev);
                col(k) = col(prev) + w * (col(j) - col(prev));
            }
        }
        i = j;
    }
    return true;
}

}  // namespace

std::vector<WindowSample> make_windows(const Dataset& dataset, std::size_t sequence_length,
                                       const std::vector<std::string>& schema, const DateRange& split_range,
                                       const MissingPolicy& policy, const std::vector<std::string>& stations) {
    if (sequence_length < 1) throw Error("sequence length must be >= 1");
    std::vector<WindowSample> out;
    const auto L = static_cast<Eigen::Index>(sequence_length);
    const auto max_masked = static_cast<Eigen::Index>(std::floor(policy.max_masked_fraction * static_cast<double>(L)));

    for (const auto& st : dataset.stations) {
        if (!stations.empty() && std::find(stations.begin(), stations.end(), st.id) == stations.end()) continue;
        auto frame = std::make_shared<const Eigen::MatrixXd>(feature_matrix(dataset, st, schema));
        const Eigen::Index n = frame->rows();

        // prefix count of rows with any missing feature
        std::vector<Eigen::Index> masked_prefix(static_cast<std::size_t>(n) + 1, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            masked_prefix[static_cast<std::size_t>(i) + 1] =
                masked_prefix[static_cast<std::size_t>(i)] + (frame->row(i).array().isNaN().any() ? 1 : 0);
        }

        for (Eigen::Index t = L; t < n; ++t) {
            const Date day = dataset.dates.at(static_cast<std::size_t>(t));
            if (!split_range.contains(day)) continue;
            if (st.gauge.missing[static_cast<std::size_t>(t)]) continue;
            const Eigen::Index masked =
                masked_prefix[static_cast<std::size_t>(t)] - masked_prefix[static_cast<std::size_t>(t - L)];
            WindowSample w;
            w.station_id = st.id;
            w.target = st.gauge.discharge[static_cast<std::size_t>(t)];
            w.target_date = day;
            w.length = L;
            if (masked == 0) {
                w.frame = frame;
                w.first_row = t - L;
            } else {
                if (masked > max_masked) continue;
                Eigen::MatrixXd own = frame->middleRows(t - L, L);
                bool ok = true;
                for (Eigen::Index c = 0; c < own.cols() && ok; ++c) ok = fill_column(own.col(c), policy.max_gap);
                if (!ok) continue;
                w.frame = std::make_shared<const Eigen::MatrixXd>(std::move(own));
                w.first_row = 0;
            }
            out.push_back(std::move(w));
        }
    }
    return out;
}

// ---- monthly --------------------------------------------------------------

std::int64_t MonthlySeries::offset(YearMonth m) const {
    const auto o = m - start;
    return (o < 0 || o >= static_cast<std::int64_t>(values.size())) ? -1 : o;
}

bool is_depth_channel(const std::string& name) {
    return name.size() >= 3 && name.compare(name.size() - 3, 3, "_mm") == 0;
}

MonthlySeries monthly_aggregate(const std::string& station_id, const Channel& channel, const DateIndex& dates,
                                double max_masked_fraction) {
    MonthlySeries out;
    out.station_id = station_id;
    out.name = channel.name;
    if (dates.length == 0) return out;
    out.start = YearMonth::of(dates.start);
    const YearMonth end = YearMonth::of(dates.last());
    const bool depth = is_depth_channel(channel.name);
    for (YearMonth m = out.start; m <= end; m = m + 1) {
        const unsigned dim = m.days_in_month();
        const Date first = m.first_day();
        double sum = 0.0;
        unsigned valid = 0;
        for (unsigned d = 0; d < dim; ++d) {
            const auto o = dates.offset(first + d);
            if (o < 0) continue;
            const double v = channel.values[static_cast<std::size_t>(o)];
            if (std::isnan(v)) continue;
            sum += v;
            ++valid;
        }
        const bool masked = valid == 0 || static_cast<double>(dim - valid) > max_masked_fraction * dim;
        if (masked) {
            out.values.push_back(kMissing);
        } else if (depth) {
            // partial months are scaled up to the full month
            out.values.push_back(valid == dim ? sum : sum / valid * dim);
        } else {
            out.values.push_back(sum / valid);
        }
        out.missing.push_back(masked);
    }
    return out;
}

MonthlySeries monthly_aggregate(const GaugeSeries& series, double max_masked_fraction) {
    return monthly_aggregate(series.station_id, Channel{"discharge_m3s", series.discharge}, series.dates,
                             max_masked_fraction);
}

std::vector<MonthlySeries> monthly_aggregate(const ForcingSeries& series, double max_masked_fraction) {
    std::vector<MonthlySeries> out;
    for (const auto& c : series.channels) out.push_back(monthly_aggregate(series.station_id, c, series.dates, max_masked_fraction));
    return out;
}

std::vector<MonthlySeries> parse_natural_monthly_csv(const fs::path& path) {
    CsvReader r(path);
    std::vector<std::string_view> f;
    if (!r.next(f)) r.fail("missing header");
    if (f.size() != 3 || f[0] != "month" || f[1] != "station_id" || f[2] != "natural_q_m3s") {
        r.fail("expected header 'month,station_id,natural_q_m3s'");
    }
    std::map<std::string, std::vector<std::pair<YearMonth, double>>> rows;
    while (r.next(f)) {
        if (f.size() != 3) r.fail("expected 3 fields");
        YearMonth m;
        try {
            m = YearMonth::parse(f[0]);
        } catch (const std::invalid_argument& e) {
            r.fail(e.what());
        }
        const double v = parse_value(r, f[2], "discharge");
        if (v < 0.0) r.fail("negative discharge");
        auto& s = rows[std::string(f[1])];
        if (!s.empty() && !(s.back().first < m)) r.fail("non-monotonic month " + m.iso());
        s.emplace_back(m, v);
    }
    std::vector<MonthlySeries> out;
    for (auto& [id, s] : rows) {
        MonthlySeries ms;
        ms.station_id = id;
        ms.name = "natural_q_m3s";
        ms.start = s.front().first;
        const auto n = static_cast<std::size_t>(s.back().first - s.front().first + 1);
        ms.values.assign(n, kMissing);
        ms.missing.assign(n, true);
        for (const auto& [m, v] : s) {
            const auto o = static_cast<std::size_t>(ms.offset(m));
            ms.values[o] = v;
            ms.missing[o] = std::isnan(v);
        }
        out.push_back(std::move(ms));
    }
    return out;
}

void write_natural_monthly_csv(const fs::path& path, const std::vector<MonthlySeries>& series) {
    auto out = open_out(path);
    out << "month,station_id,natural_q_m3s\n";
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            out << s.month_at(i).iso() << ',' << s.station_id << ',' << format_number(s.values[i]) << '\n';
        }
    }
}

}  // namespace hydroseq
