#include <doctest.h>

#include "hydroseq/synthbasin.hpp"
#include "test_support.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

using namespace hydroseq;
using namespace hydroseq::synth;
using hydroseq::testing::consecutive_split;
using hydroseq::testing::scratch_dir;

namespace {

const Date d0 = Date::from_ymd(2001, 1, 1);

BasinSpec basin(const std::string& id, double noise = 0.0) {
    BasinSpec b;
    b.basin_id = id;
    b.noise_std = noise;
    return b;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("gen_forcing: dry climate, determinism, long-run mean") {
    auto b = basin("a");
    b.climate.wet_day_probability = 0.0;
    const auto dry = gen_forcing(b, d0, 400, 1);
    for (double p : dry.precip_true) CHECK(p == 0.0);

    auto w = basin("a");
    const auto f1 = gen_forcing(w, d0, 500, 7);
    const auto f2 = gen_forcing(w, d0, 500, 7);
    CHECK(f1.precip_true == f2.precip_true);
    CHECK(f1.precip_chirps == f2.precip_chirps);
    CHECK(f1.t2m_k == f2.t2m_k);
    CHECK(gen_forcing(w, d0, 500, 8).precip_true != f1.precip_true);

    for (double mean : {1.0, 3.0, 6.0}) {
        w.climate.mean_precip_mm = mean;
        const auto f = gen_forcing(w, d0, 10000, 3);
        const double m = std::accumulate(f.precip_true.begin(), f.precip_true.end(), 0.0) / 10000.0;
        CHECK(std::abs(m - mean) <= 0.1 * mean);
    }
}

TEST_CASE("gen_forcing: wet days are never negative and the gamma scale tracks the mean") {
    Climate c;
    c.mean_precip_mm = 4.0;
    c.wet_day_probability = 0.25;
    c.gamma_shape = 0.5;
    CHECK(c.wet_day_probability * c.gamma_shape * c.gamma_scale() == doctest::Approx(4.0));
    auto b = basin("a");
    b.climate = c;
    b.chirps = {0.3, 0.2};
    const auto f = gen_forcing(b, d0, 2000, 4);
    for (std::size_t i = 0; i < f.dates.length; ++i) {
        CHECK(f.precip_true[i] >= 0.0);
        CHECK(f.precip_chirps[i] >= 0.0);
        CHECK(std::isfinite(f.t2m_k[i]));
    }
}

TEST_CASE("linear_reservoir: hand arithmetic and steady state") {
    const std::vector<double> zero(50, 0.0);
    for (double q : linear_reservoir(zero, 0.5, 0.1).discharge) CHECK(q == 0.0);

    const std::vector<double> p{4.0, 0.0};
    const auto r = linear_reservoir(p, 0.5, 0.1, 10.0);
    CHECK(r.discharge[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.storage[1] == doctest::Approx(11.0).epsilon(1e-15));
    CHECK(r.discharge[1] == doctest::Approx(1.1).epsilon(1e-15));

    const std::vector<double> constant(2000, 3.0);
    const auto s = linear_reservoir(constant, 0.4, 0.05);
    CHECK(std::abs(s.discharge.back() - 0.4 * 3.0) <= 1e-6);
}

TEST_CASE("property: reservoir mass balance over random horizons") {
    std::mt19937_64 gen(17);
    std::gamma_distribution<double> g(0.7, 5.0);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p(100 + gen() % 5000);
        for (double& x : p) x = (gen() % 3 == 0) ? g(gen) : 0.0;
        const double r = u(gen), k = u(gen);
        const auto run = linear_reservoir(p, r, k);
        long double in = 0, out = 0;
        for (std::size_t t = 0; t < p.size(); ++t) in += r * p[t], out += run.discharge[t];
        CHECK(std::abs(static_cast<double>(in - out) - run.storage.back()) <= 1e-9 * static_cast<double>(in));
    }
}

TEST_CASE("apply_dam: hand step, empty inflow, conservation") {
    const std::vector<double> none(10, 0.0);
    const auto e = apply_dam(none, {"d", 100, 3, 0});
    for (std::size_t t = 0; t < 10; ++t) {
        CHECK(e.outflow[t] == 0.0);
        CHECK(e.level_below_max[t] == 1.0);
    }
    const std::vector<double> five(3, 5.0);
    const auto d = apply_dam(five, {"d", 100, 3, 0});
    CHECK(d.outflow[0] == 3.0);
    CHECK(d.storage[0] == 2.0);
    CHECK(d.level_below_max[0] == doctest::Approx(0.98).epsilon(1e-15));
    CHECK_THROWS_AS((DamSpec{"d", 10, 1, 11}.validate()), Error);
    CHECK_THROWS_AS((DamSpec{"d", 10, -1, 0}.validate()), Error);
}

TEST_CASE("property: dam conserves mass and bounds outflow and level") {
    std::mt19937_64 gen(23);
    std::gamma_distribution<double> g(0.6, 20.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> in(500 + gen() % 3000);
        for (double& x : in) x = u(gen) < 0.4 ? g(gen) : 0.0;
        DamSpec dam{"d", 50 + 500 * u(gen), 10 * u(gen), 0};
        dam.initial_storage = dam.capacity * u(gen);
        const auto run = apply_dam(in, dam);
        double prev = dam.initial_storage, cin = 0, cout = 0;
        for (std::size_t t = 0; t < in.size(); ++t) {
            CHECK(run.outflow[t] <= prev + in[t] + 1e-12);
            CHECK(run.level_below_max[t] >= 0.0);
            CHECK(run.level_below_max[t] <= 1.0);
            cin += in[t];
            cout += run.outflow[t];
            prev = run.storage[t];
        }
        const double scale = std::max(cin, 1.0);
        CHECK(std::abs((cin - cout) - (run.storage.back() - dam.initial_storage)) <= 1e-9 * scale);
    }
}

TEST_CASE("static attributes are deterministic functions of the spec") {
    auto b = basin("a");
    const auto s1 = static_attributes(b);
    CHECK(s1.station_id == "a");
    CHECK(s1.names.size() == 7);
    CHECK(static_attributes(b).values == s1.values);
    CHECK(*s1.get("area_km2") == b.area_km2);
    b.storage_coefficient = 0.3;
    CHECK(static_attributes(b).values != s1.values);
    b.storage_coefficient = 1.0;
    CHECK_THROWS_AS(b.validate(), Error);
}

TEST_CASE("generate: noiseless undammed basin observes the natural flow exactly") {
    const auto split = consecutive_split(d0, 200, 50, 50);
    const auto data = generate({basin("a")}, {}, 300, split, 1);
    REQUIRE(data.gauges.size() == 1);
    const auto& g = data.gauges[0];
    const auto& t = data.truth[0];
    for (std::size_t i = 0; i < 300; ++i) {
        CHECK(g.discharge[i] == t.natural_m3s[i]);
        CHECK(t.regulated_m3s[i] == t.natural_m3s[i]);
    }
    CHECK(mm_per_day_to_m3s(86.4, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("generate: dams regulate only their basin and must reference a known basin") {
    const auto split = consecutive_split(d0, 200, 50, 50);
    std::map<std::string, DamSpec> dams{{"b", {"dam_b", 500, 5, 100}}};
    const auto data = generate({basin("a"), basin("b")}, dams, 300, split, 2);
    REQUIRE(data.dam_levels.size() == 1);
    CHECK(data.dam_levels[0].dam_id == "dam_b");
    CHECK(data.truth[0].regulated_m3s == data.truth[0].natural_m3s);
    CHECK(data.truth[1].regulated_m3s != data.truth[1].natural_m3s);
    CHECK(data.truth[1].dam_id == std::optional<std::string>("dam_b"));
    std::map<std::string, DamSpec> bad{{"zz", {"d", 10, 1, 0}}};
    CHECK_THROWS_AS(generate({basin("a")}, bad, 300, split, 2), Error);
    CHECK_THROWS_AS(generate({basin("a")}, {}, 100, split, 2), Error);
}

TEST_CASE("make_dataset: file layout and write-then-read equality") {
    const auto dir = scratch_dir("synth_files");
    const auto split = consecutive_split(d0, 200, 50, 50);
    auto b = basin("b", 0.1);
    b.missing_fraction = 0.05;
    std::map<std::string, DamSpec> dams{{"b", {"dam_b", 500, 5, 100}}};
    const auto data = make_dataset({basin("a"), b, basin("c")}, dams, 300, split, 3, dir);
    for (const char* id : {"a", "b", "c"}) {
        CHECK(std::filesystem::exists(dir / "gauges" / (std::string(id) + ".csv")));
        CHECK(std::filesystem::exists(dir / "forcing" / (std::string(id) + ".csv")));
    }
    const auto statics = parse_static_csv(dir / "static_attributes.csv");
    CHECK(statics.size() == 3);
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "natural_monthly.csv"));

    for (const auto& g : data.gauges) {
        const auto back = parse_gauge_csv(dir / "gauges" / (g.station_id + ".csv"));
        CHECK(back.dates == g.dates);
        CHECK(back.missing == g.missing);
        CHECK(back.quality == g.quality);
        for (std::size_t i = 0; i < g.discharge.size(); ++i)
            if (!g.missing[i]) CHECK(back.discharge[i] == g.discharge[i]);
    }
    for (const auto& f : data.forcings) {
        const auto back = parse_forcing_csv(dir / "forcing" / (f.station_id + ".csv"));
        REQUIRE(back.channels.size() == f.channels.size());
        for (std::size_t c = 0; c < f.channels.size(); ++c) CHECK(back.channels[c].values == f.channels[c].values);
    }
    const auto levels = parse_dam_csv(dir / "dam_levels.csv");
    REQUIRE(levels.size() == 1);
    CHECK(levels[0].level == data.dam_levels[0].level);
    const auto ds = data.to_dataset();
    CHECK(ds.stations.size() == 3);
}

TEST_CASE("property: identical specs and seed give byte-identical files") {
    const auto a = scratch_dir("synth_det_a");
    const auto b = scratch_dir("synth_det_b");
    const auto split = consecutive_split(d0, 200, 50, 50);
    std::map<std::string, DamSpec> dams{{"y", {"dam_y", 300, 2, 10}}};
    make_dataset({basin("x", 0.1), basin("y", 0.2)}, dams, 300, split, 42, a);
    make_dataset({basin("x", 0.1), basin("y", 0.2)}, dams, 300, split, 42, b);
    std::size_t compared = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), a);
        CHECK_MESSAGE(slurp(e.path()) == slurp(b / rel), rel.string());
        ++compared;
    }
    CHECK(compared >= 8);
}

TEST_CASE("basin and dam json round-trip") {
    auto b = basin("q", 0.05);
    b.climate.phase_days = 40;
    b.era5 = {0.2, 0.1};
    const auto back = basin_from_json(to_json(b));
    CHECK(to_json(back) == to_json(b));
    const DamSpec d{"d", 10, 1, 5};
    CHECK(to_json(dam_from_json(to_json(d))) == to_json(d));
    CHECK_THROWS_AS(basin_from_json(nlohmann::json{{"basin_id", "x"}, {"storage_coefficient", 2.0}}), Error);
}
