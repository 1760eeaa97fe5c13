#include <doctest.h>

#include "hydroseq/timeseries.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace hydroseq;
using hydroseq::testing::consecutive_split;
using hydroseq::testing::make_forcing;
using hydroseq::testing::make_gauge;
using hydroseq::testing::scratch_dir;
using hydroseq::testing::write_file;

namespace {

const Date d0 = Date::from_ymd(2001, 1, 1);

std::vector<double> ramp(std::size_t n, double start = 1.0) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + static_cast<double>(i);
    return v;
}

/// One station per id, each with a `precip_mm` channel and discharge ramp, fully covered.
Dataset simple_dataset(const std::vector<std::string>& ids, std::size_t days, const SplitSpec& split) {
    std::vector<GaugeSeries> g;
    std::vector<ForcingSeries> f;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        g.push_back(make_gauge(ids[k], d0, ramp(days, 1.0 + static_cast<double>(k))));
        f.push_back(make_forcing(ids[k], d0, {{"precip_mm", ramp(days, 0.5)}}));
    }
    return build_dataset(g, f, {}, split);
}

double oracle_mean(const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s / v.size());
}

}  // namespace

TEST_CASE("gauge csv: empty value masks the day") {
    const auto dir = scratch_dir("ts_gauge_empty");
    write_file(dir / "s1.csv", "date,discharge_m3s,quality\n2001-01-01,1.0,A\n2001-01-02,,A\n2001-01-03,2.0,A\n");
    const auto g = parse_gauge_csv(dir / "s1.csv");
    CHECK(g.station_id == "s1");
    REQUIRE(g.dates.length == 3);
    CHECK(g.missing == std::vector<bool>{false, true, false});
    CHECK(g.discharge[0] == 1.0);
    CHECK(std::isnan(g.discharge[1]));
}

TEST_CASE("gauge csv: date gap becomes a masked day") {
    const auto dir = scratch_dir("ts_gauge_gap");
    write_file(dir / "s1.csv", "date,discharge_m3s,quality\n2001-01-01,1.0,A\n2001-01-03,2.0,A\n");
    const auto g = parse_gauge_csv(dir / "s1.csv");
    REQUIRE(g.dates.length == 3);
    CHECK(g.missing[1]);
    CHECK(g.unmasked_count() == 2);
}

TEST_CASE("gauge csv: quality code outside the allowlist masks only that day") {
    const auto dir = scratch_dir("ts_gauge_quality");
    write_file(dir / "s1.csv",
               "date,discharge_m3s,quality\n2001-01-01,1,A\n2001-01-02,2,A\n2001-01-03,3,X\n2001-01-04,4,A\n"
               "2001-01-05,5,A\n");
    const auto g = parse_gauge_csv(dir / "s1.csv", {"A"});
    CHECK(g.unmasked_count() == 4);
    CHECK(g.missing[2]);
}

TEST_CASE("gauge csv: malformed input throws") {
    const auto dir = scratch_dir("ts_gauge_bad");
    write_file(dir / "a.csv", "day,q\n2001-01-01,1\n");
    write_file(dir / "b.csv", "date,discharge_m3s,quality\n2001-01-02,1,A\n2001-01-01,1,A\n");
    write_file(dir / "c.csv", "date,discharge_m3s,quality\n2001-01-01,-1,A\n");
    CHECK_THROWS_AS(parse_gauge_csv(dir / "a.csv"), Error);
    CHECK_THROWS_AS(parse_gauge_csv(dir / "b.csv"), Error);
    CHECK_THROWS_AS(parse_gauge_csv(dir / "c.csv"), Error);
    CHECK_THROWS_AS(parse_gauge_csv(dir / "missing.csv"), Error);
}

TEST_CASE("property: masking is monotone in the allowlist") {
    const auto dir = scratch_dir("ts_gauge_monotone");
    std::mt19937_64 gen(11);
    const char* codes[] = {"A", "B", "C", "D"};
    std::string csv = "date,discharge_m3s,quality\n";
    for (int i = 0; i < 60; ++i) csv += (d0 + i).iso() + ",1," + codes[gen() % 4] + "\n";
    write_file(dir / "s.csv", csv);
    const std::vector<std::string> all = {"A", "B", "C", "D"};
    std::size_t prev = parse_gauge_csv(dir / "s.csv", {all.begin(), all.end()}).unmasked_count();
    // shrinking the allowlist (adding disallowed codes) never unmasks a day
    for (std::size_t k = all.size() - 1; k >= 1; --k) {
        const auto n = parse_gauge_csv(dir / "s.csv", {all.begin(), all.begin() + static_cast<long>(k)}).unmasked_count();
        CHECK(n <= prev);
        prev = n;
    }
}

TEST_CASE("gauge and forcing csv round-trip") {
    const auto dir = scratch_dir("ts_roundtrip");
    auto g = make_gauge("s1", d0, {1.25, kMissing, 0.1, 3e-7});
    g.quality = {"A", "M", "A", "A"};
    write_gauge_csv(dir / "g.csv", g);
    const auto g2 = parse_gauge_csv(dir / "g.csv", {}, "s1");
    CHECK(g2.dates == g.dates);
    CHECK(g2.missing == g.missing);
    for (std::size_t i = 0; i < 4; ++i)
        if (!g.missing[i]) CHECK(g2.discharge[i] == g.discharge[i]);
    const auto f = make_forcing("s1", d0, {{"precip_mm", {0.1, 0.2, 0.3, 0.7}}, {"t2m_k", {290.1, kMissing, 291, 1e5}}});
    write_forcing_csv(dir / "f.csv", f);
    const auto f2 = parse_forcing_csv(dir / "f.csv", "s1");
    REQUIRE(f2.channels.size() == 2);
    CHECK(f2.channels[0].values == f.channels[0].values);
    CHECK(std::isnan(f2.channels[1].values[1]));
    CHECK(f2.channels[1].values[3] == 1e5);
}

TEST_CASE("split spec rejects overlapping or empty ranges") {
    auto s = consecutive_split(d0, 10, 5, 5);
    CHECK_NOTHROW(s.validate());
    s.validation.first = s.train.last;
    CHECK_THROWS_AS(s.validate(), Error);
    auto e = consecutive_split(d0, 10, 5, 5);
    e.test.last = e.test.first - 1;
    CHECK_THROWS_AS(e.validate(), Error);
}

TEST_CASE("build_dataset: fully covered stations are accepted") {
    const auto ds = simple_dataset({"b", "a"}, 40, consecutive_split(d0, 20, 10, 10));
    CHECK(ds.station_ids() == std::vector<std::string>{"a", "b"});
    CHECK(ds.excluded.empty());
    CHECK(ds.dates.length == 40);
}

TEST_CASE("build_dataset: a station without forcing is excluded with a reason") {
    std::vector<GaugeSeries> g;
    std::vector<ForcingSeries> f;
    for (const char* id : {"a", "b", "c"}) g.push_back(make_gauge(id, d0, ramp(40)));
    for (const char* id : {"a", "c"}) f.push_back(make_forcing(id, d0, {{"precip_mm", ramp(40)}}));
    const auto ds = build_dataset(g, f, {}, consecutive_split(d0, 20, 10, 10));
    CHECK(ds.stations.size() == 2);
    REQUIRE(ds.excluded.size() == 1);
    CHECK(ds.excluded[0].station_id == "b");
    CHECK_FALSE(ds.excluded[0].reason.empty());
}

TEST_CASE("build_dataset: errors") {
    std::vector<GaugeSeries> g{make_gauge("a", d0, ramp(40)), make_gauge("a", d0, ramp(40))};
    std::vector<ForcingSeries> f{make_forcing("a", d0, {{"precip_mm", ramp(40)}})};
    CHECK_THROWS_AS(build_dataset(g, f, {}, consecutive_split(d0, 20, 10, 10)), Error);
    g.pop_back();
    auto bad = consecutive_split(d0, 20, 10, 10);
    bad.validation.first = bad.train.first;
    CHECK_THROWS_AS(build_dataset(g, f, {}, bad), Error);
    // calendar beyond every series
    CHECK_THROWS_AS(build_dataset(g, f, {}, consecutive_split(d0, 20, 10, 100)), Error);
}

TEST_CASE("fit_normalizer: population moments over the train range") {
    std::vector<GaugeSeries> g{make_gauge("a", d0, {1, 2, 3, 10, 10, 10})};
    std::vector<ForcingSeries> f{make_forcing("a", d0, {{"precip_mm", {1, 2, 3, 50, 60, 70}}, {"sp_pa", {5, 5, 5, 1, 2, 3}}})};
    const auto ds = build_dataset(g, f, {}, consecutive_split(d0, 3, 2, 1));
    const auto st = fit_normalizer(ds);
    CHECK(st.channels.at("precip_mm").mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(st.channels.at("precip_mm").std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
    CHECK(st.channels.at("precip_mm").std == doctest::Approx(0.816497).epsilon(1e-6));
    CHECK(st.discharge.at("a").mean == doctest::Approx(2.0));
    // constant channel: floored and flagged, not fatal
    CHECK(st.channels.at("sp_pa").std == kStdFloor);
    CHECK(st.channels.at("sp_pa").floored);
    CHECK(std::find(st.flagged.begin(), st.flagged.end(), "sp_pa") != st.flagged.end());
}

TEST_CASE("fit_normalizer: all-masked channel in the train range throws") {
    std::vector<GaugeSeries> g{make_gauge("a", d0, {1, 2, 3, 4, 5, 6})};
    std::vector<ForcingSeries> f{make_forcing("a", d0, {{"precip_mm", {kMissing, kMissing, kMissing, 1, 2, 3}}})};
    const auto ds = build_dataset(g, f, {}, consecutive_split(d0, 3, 2, 1));
    CHECK_THROWS_AS(fit_normalizer(ds), Error);
}

TEST_CASE("transform: direct formula and mean maps to zero") {
    std::vector<GaugeSeries> g{make_gauge("a", d0, {1, 2, 3, 4, 2, 4})};
    std::vector<ForcingSeries> f{make_forcing("a", d0, {{"precip_mm", {1, 2, 3, 4, 2, 4}}})};
    const auto ds = build_dataset(g, f, {}, consecutive_split(d0, 3, 2, 1));
    const auto st = fit_normalizer(ds);
    const auto z = transform(st, ds, Direction::forward);
    const auto& c = z.stations[0].forcing.channels[0].values;
    CHECK(c[1] == 0.0);
    CHECK(c[3] == doctest::Approx(2.449490).epsilon(1e-6));
    CHECK(c[3] == doctest::Approx(2.0 / std::sqrt(2.0 / 3.0)).epsilon(1e-14));
    CHECK_THROWS_AS(transform(st, z, Direction::forward), Error);
    NormStats empty;
    CHECK_THROWS_AS(transform(empty, ds, Direction::forward), Error);
}

TEST_CASE("property: inverse(forward(x)) == x within 1e-12 relative") {
    std::mt19937_64 gen(5);
    std::lognormal_distribution<double> ln(0.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 50;
        std::vector<GaugeSeries> g;
        std::vector<ForcingSeries> f;
        std::vector<StaticAttributes> s;
        for (const char* id : {"a", "b"}) {
            std::vector<double> q(n), p(n), t(n);
            for (std::size_t i = 0; i < n; ++i) {
                q[i] = ln(gen);
                p[i] = ln(gen) * 10;
                t[i] = 280 + ln(gen);
            }
            g.push_back(make_gauge(id, d0, q));
            f.push_back(make_forcing(id, d0, {{"precip_mm", p}, {"t2m_k", t}}));
            s.push_back({id, {"area_km2"}, {ln(gen) * 1000}});
        }
        const auto ds = build_dataset(g, f, s, consecutive_split(d0, 30, 10, 10));
        const auto st = fit_normalizer(ds, trial % 2 == 1);
        const auto back = transform(st, transform(st, ds, Direction::forward), Direction::inverse);
        for (std::size_t k = 0; k < ds.stations.size(); ++k) {
            const auto& a = ds.stations[k];
            const auto& b = back.stations[k];
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(std::abs(b.gauge.discharge[i] - a.gauge.discharge[i]) <= 1e-12 * std::abs(a.gauge.discharge[i]));
                for (std::size_t c = 0; c < 2; ++c) {
                    const double x = a.forcing.channels[c].values[i];
                    CHECK(std::abs(b.forcing.channels[c].values[i] - x) <= 1e-12 * std::abs(x));
                }
            }
            CHECK(std::abs(b.statics->values[0] - a.statics->values[0]) <= 1e-12 * a.statics->values[0]);
        }
    }
}

TEST_CASE("make_windows: boundary counts") {
    const std::vector<std::string> schema{"precip_mm"};
    SUBCASE("31 days, L=30 gives one window") {
        const auto ds = simple_dataset({"a"}, 31, consecutive_split(d0, 29, 1, 1));
        CHECK(make_windows(ds, 30, schema, ds.dates.range()).size() == 1);
    }
    SUBCASE("40 days, L=30 gives ten windows") {
        const auto ds = simple_dataset({"a"}, 40, consecutive_split(d0, 20, 10, 10));
        const auto w = make_windows(ds, 30, schema, ds.dates.range());
        REQUIRE(w.size() == 10);
        // inputs are days t-L..t-1 and the target is day t
        CHECK(w[0].target_date == d0 + 30);
        CHECK(w[0].target == 31.0);
        CHECK(w[0].inputs()(0, 0) == 0.5);
        CHECK(w[0].inputs()(29, 0) == 29.5);
    }
    SUBCASE("a masked target drops that window") {
        std::vector<GaugeSeries> g{make_gauge("a", d0, ramp(40))};
        g[0].discharge[35] = kMissing;
        g[0].missing[35] = true;
        std::vector<ForcingSeries> f{make_forcing("a", d0, {{"precip_mm", ramp(40)}})};
        const auto ds = build_dataset(g, f, {}, consecutive_split(d0, 20, 10, 10));
        const auto w = make_windows(ds, 30, schema, ds.dates.range());
        CHECK(w.size() == 9);
        for (const auto& s : w) CHECK(s.target_date != d0 + 35);
    }
}

TEST_CASE("make_windows: statics repeat on every row and gaps are interpolated") {
    std::vector<double> p = ramp(40);
    p[10] = kMissing;
    std::vector<GaugeSeries> g{make_gauge("a", d0, ramp(40))};
    std::vector<ForcingSeries> f{make_forcing("a", d0, {{"precip_mm", p}})};
    std::vector<StaticAttributes> s{{"a", {"area_km2"}, {321.0}}};
    const auto ds = build_dataset(g, f, s, consecutive_split(d0, 20, 10, 10));
    const auto w = make_windows(ds, 20, {"precip_mm", "area_km2"}, {d0 + 20, d0 + 20});
    REQUIRE(w.size() == 1);
    for (Eigen::Index r = 0; r < 20; ++r) CHECK(w[0].inputs()(r, 1) == 321.0);
    CHECK(w[0].inputs()(10, 0) == doctest::Approx(11.0));
    CHECK_THROWS_AS(make_windows(ds, 20, {"nope"}, ds.dates.range()), Error);
}

namespace {

/// Brute-force window policy check on one row block.
bool window_ok(const std::vector<std::vector<double>>& cols, std::size_t t, std::size_t L, const MissingPolicy& p) {
    std::size_t masked_rows = 0;
    for (std::size_t r = t - L; r < t; ++r) {
        bool any = false;
        for (const auto& c : cols) any = any || std::isnan(c[r]);
        masked_rows += any;
    }
    if (masked_rows == 0) return true;
    if (static_cast<double>(masked_rows) > std::floor(p.max_masked_fraction * static_cast<double>(L))) return false;
    for (const auto& c : cols) {
        std::size_t run = 0, valid = 0;
        for (std::size_t r = t - L; r < t; ++r) {
            if (std::isnan(c[r])) {
                if (++run > p.max_gap) return false;
            } else {
                run = 0;
                ++valid;
            }
        }
        if (valid == 0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("property: window count matches brute-force enumeration") {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 30 + gen() % 71;
        const std::size_t L = 1 + gen() % 20;
        const double p_miss = 0.15 * u(gen);
        std::vector<double> q(n), a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            q[i] = u(gen) < p_miss ? kMissing : u(gen);
            a[i] = u(gen) < p_miss ? kMissing : u(gen);
            b[i] = u(gen) < p_miss ? kMissing : u(gen);
        }
        // split ranges need an unmasked discharge value each
        q[0] = q[n / 2] = q[n - 1] = 1.0;
        MissingPolicy policy;
        policy.max_gap = gen() % 4;
        policy.max_masked_fraction = 0.3 * u(gen);
        const auto split = consecutive_split(d0, static_cast<std::int64_t>(n / 2), 1,
                                             static_cast<std::int64_t>(n - n / 2 - 1));
        const auto ds = build_dataset({make_gauge("s", d0, q)}, {make_forcing("s", d0, {{"x", a}, {"y", b}})}, {}, split);
        const DateRange range{d0 + static_cast<std::int64_t>(n / 3), d0 + static_cast<std::int64_t>(n - 1)};
        std::size_t expected = 0;
        for (std::size_t t = L; t < n; ++t) {
            if (!range.contains(d0 + static_cast<std::int64_t>(t)) || std::isnan(q[t])) continue;
            expected += window_ok({a, b}, t, L, policy);
        }
        const auto w = make_windows(ds, L, {"x", "y"}, range, policy);
        CHECK(w.size() == expected);
        for (const auto& s : w) CHECK(s.inputs().allFinite());
    }
}

TEST_CASE("monthly_aggregate: sums, means and masking") {
    SUBCASE("31 days of 1 mm sum to 31 mm") {
        const auto f = make_forcing("a", d0, {{"precip_mm", std::vector<double>(31, 1.0)}});
        const auto m = monthly_aggregate(f);
        REQUIRE(m.size() == 1);
        REQUIRE(m[0].size() == 1);
        CHECK(m[0].values[0] == doctest::Approx(31.0));
    }
    SUBCASE("constant discharge averages to itself") {
        const auto m = monthly_aggregate(make_gauge("a", d0, std::vector<double>(31, 5.0)));
        CHECK(m.values[0] == doctest::Approx(5.0));
    }
    SUBCASE("half at 2 and half at 4 in a 30-day month gives 3") {
        std::vector<double> q(30, 2.0);
        for (std::size_t i = 15; i < 30; ++i) q[i] = 4.0;
        const auto m = monthly_aggregate(make_gauge("a", Date::from_ymd(2001, 4, 1), q));
        REQUIRE(m.size() == 1);
        CHECK(m.start == YearMonth{2001, 4});
        CHECK(m.values[0] == doctest::Approx(3.0).epsilon(1e-15));
    }
    SUBCASE("more than 20% masked days masks the month") {
        std::vector<double> q(31, 1.0);
        for (std::size_t i = 0; i < 7; ++i) q[i] = kMissing;
        const auto m = monthly_aggregate(make_gauge("a", d0, q));
        CHECK(m.missing[0]);
        q[0] = 1.0;  // 6 of 31 masked is within the limit
        CHECK_FALSE(monthly_aggregate(make_gauge("a", d0, q)).missing[0]);
    }
}

TEST_CASE("natural monthly csv round-trip") {
    const auto dir = scratch_dir("ts_natural");
    MonthlySeries m{"a", "natural_q_m3s", {2001, 1}, {1.5, kMissing, 2.25}, {false, true, false}};
    write_natural_monthly_csv(dir / "n.csv", {m});
    const auto back = parse_natural_monthly_csv(dir / "n.csv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].station_id == "a");
    CHECK(back[0].start == m.start);
    CHECK(back[0].missing == m.missing);
    CHECK(back[0].values[2] == 2.25);
}

TEST_CASE("fit_moments matches an independent two-pass oracle") {
    std::vector<double> v{3.5, -1.0, 2.0, kMissing, 8.0};
    const auto m = fit_moments(v);
    const std::vector<double> fin{3.5, -1.0, 2.0, 8.0};
    const double mu = oracle_mean(fin);
    double ss = 0;
    for (double x : fin) ss += (x - mu) * (x - mu);
    CHECK(m.mean == doctest::Approx(mu).epsilon(1e-15));
    CHECK(m.std == doctest::Approx(std::sqrt(ss / 4)).epsilon(1e-15));
    CHECK_THROWS_AS(fit_moments(std::vector<double>{1.0}), Error);
}
