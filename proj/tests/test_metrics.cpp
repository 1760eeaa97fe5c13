#include <doctest.h>

#include "hydroseq/metrics.hpp"
#include "hydroseq/timeseries.hpp"
#include "test_support.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

using namespace hydroseq;

namespace {

/// Long-double NSE over jointly finite pairs.
long double nse_oracle(const std::vector<double>& o, const std::vector<double>& p) {
    long double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < o.size(); ++i)
        if (std::isfinite(o[i]) && std::isfinite(p[i])) s += o[i], ++n;
    const long double mu = s / n;
    long double num = 0, den = 0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (!(std::isfinite(o[i]) && std::isfinite(p[i]))) continue;
        num += (static_cast<long double>(o[i]) - p[i]) * (static_cast<long double>(o[i]) - p[i]);
        den += (o[i] - mu) * (o[i] - mu);
    }
    return 1.0L - num / den;
}

std::vector<StationScore> scores(const std::vector<double>& v) {
    std::vector<StationScore> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back({"s" + std::to_string(i), v[i], 10, ""});
    return out;
}

}  // namespace

TEST_CASE("nse: identities") {
    const std::vector<double> o{1, 2, 3};
    CHECK(*nse(o, o).value == 1.0);
    const std::vector<double> mean(3, 2.0);
    CHECK(std::abs(*nse(o, mean).value) <= 1e-12);
    const std::vector<double> p{1, 1, 3};
    CHECK(std::abs(*nse(o, p).value - 0.5) <= 1e-12);
}

TEST_CASE("nse: masked pairs are skipped, degenerate inputs are undefined") {
    const std::vector<double> o{1, kMissing, 2, 3};
    const std::vector<double> p{1, 7, 1, kMissing};
    const auto r = nse(o, p);
    REQUIRE(r.value);
    CHECK(r.n_obs == 2);
    CHECK(*r.value == doctest::Approx(static_cast<double>(nse_oracle(o, p))));
    const auto c = nse(std::vector<double>{4, 4, 4}, std::vector<double>{1, 2, 3});
    CHECK_FALSE(c.value);
    CHECK_FALSE(c.reason.empty());
    CHECK_FALSE(nse(std::vector<double>{1}, std::vector<double>{1}).value);
    CHECK_THROWS_AS(nse(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
}

TEST_CASE("property: nse matches the long-double oracle and is affine invariant") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> o(40), p(40);
        for (std::size_t i = 0; i < o.size(); ++i) {
            o[i] = 5 + n(gen);
            p[i] = o[i] + 0.5 * n(gen);
        }
        const double v = *nse(o, p).value;
        CHECK(v == doctest::Approx(static_cast<double>(nse_oracle(o, p))).epsilon(1e-12));
        const double a = trial % 2 ? -3.7 : 0.02, b = 11.0 * n(gen);
        std::vector<double> oa(o), pa(p);
        for (std::size_t i = 0; i < o.size(); ++i) oa[i] = a * o[i] + b, pa[i] = a * p[i] + b;
        CHECK(*nse(oa, pa).value == doctest::Approx(v).epsilon(1e-9));
        // strictly lower SSE than the mean predictor gives a positive score
        const double mu = static_cast<double>(std::accumulate(o.begin(), o.end(), 0.0L) / o.size());
        std::vector<double> shrunk(o);
        for (double& x : shrunk) x = mu + 0.5 * (x - mu);
        CHECK(*nse(o, shrunk).value > 0.0);
    }
}

TEST_CASE("summarize: hand cases") {
    const auto r = summarize(scores({-1.0, 0.2, 0.5}));
    CHECK(r.mean_nse == doctest::Approx(-0.1).epsilon(1e-15));
    CHECK(r.median_nse == 0.2);
    CHECK(r.n_below_zero == 1);
    CHECK(r.n_defined == 3);
    const auto single = summarize(scores({0.48}));
    CHECK(single.mean_nse == 0.48);
    CHECK(single.median_nse == 0.48);
    CHECK(single.n_below_zero == 0);
    CHECK(summarize(scores({0.1, 0.4, 0.2, 0.3})).median_nse == doctest::Approx(0.25));
}

TEST_CASE("summarize: undefined stations are excluded and reported") {
    auto s = scores({0.3, 0.5});
    s.push_back({"flat", std::nullopt, 100, "constant observed series"});
    const auto r = summarize(s);
    CHECK(r.n_defined == 2);
    CHECK(r.mean_nse == doctest::Approx(0.4));
    REQUIRE(r.undefined_stations.size() == 1);
    CHECK(r.undefined_stations[0].first == "flat");
    CHECK_THROWS_AS(summarize({{"x", std::nullopt, 0, "none"}}), Error);
}

TEST_CASE("property: adding a negative station increments n_below_zero by one") {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(-2.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> v(1 + gen() % 20);
        for (double& x : v) x = u(gen);
        const auto before = summarize(scores(v)).n_below_zero;
        v.push_back(-0.01 - std::abs(u(gen)));
        CHECK(summarize(scores(v)).n_below_zero == before + 1);
    }
}

TEST_CASE("cdf_points: ordering and ties") {
    const auto one = cdf_points(std::vector<double>{0.3});
    REQUIRE(one.size() == 1);
    CHECK(one[0].nse == 0.3);
    CHECK(one[0].probability == 1.0);
    const auto two = cdf_points(std::vector<double>{0.2, 0.1});
    CHECK(two[0].nse == 0.1);
    CHECK(two[0].probability == 0.5);
    CHECK(two[1].nse == 0.2);
    CHECK(two[1].probability == 1.0);
    const auto tie = cdf_points(std::vector<double>{0.1, 0.1});
    CHECK(tie[0].probability == 0.5);
    CHECK(tie[1].probability == 1.0);
}

TEST_CASE("property: cdf is ascending with probabilities exactly i/N") {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(1 + gen() % 60);
        for (double& x : v) x = std::round(n(gen) * 4) / 4;  // force ties
        const auto c = cdf_points(v);
        REQUIRE(c.size() == v.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            CHECK(c[i].probability == static_cast<double>(i + 1) / static_cast<double>(v.size()));
            if (i > 0) {
                CHECK(c[i].nse >= c[i - 1].nse);
                CHECK(c[i].probability > c[i - 1].probability);
            }
        }
    }
}

TEST_CASE("write_report: files and columns") {
    const auto dir = hydroseq::testing::scratch_dir("metrics_report");
    auto s = scores({-0.5, 0.25});
    s.push_back({"zz", std::nullopt, 0, "fewer than 2 jointly unmasked values"});
    const auto rep = summarize(s);
    write_report(dir, rep, {{"s0", {-23.5, 29.25}}});
    std::ifstream j(dir / "report.json");
    const auto parsed = nlohmann::json::parse(j);
    for (const char* k : {"mean_nse", "median_nse", "n_below_zero", "cdf", "stations", "undefined_stations"}) {
        CHECK(parsed.contains(k));
    }
    CHECK(parsed["n_below_zero"] == 1);
    std::ifstream by(dir / "nse_by_station.csv");
    std::string line;
    std::getline(by, line);
    CHECK(line == "station_id,nse,n_obs,lat,lon");
    std::getline(by, line);
    CHECK(line == "s0,-0.5,10,-23.5,29.25");
    std::ifstream cdf(dir / "nse_cdf.csv");
    std::getline(cdf, line);
    CHECK(line == "nse,cum_prob");
    std::getline(cdf, line);
    CHECK(line == "-0.5,0.5");
}

TEST_CASE("coordinates csv") {
    const auto dir = hydroseq::testing::scratch_dir("metrics_coords");
    hydroseq::testing::write_file(dir / "c.csv", "station_id,lat,lon\na,-22.5,30.1\n");
    const auto c = parse_coordinates_csv(dir / "c.csv");
    CHECK(c.at("a").lat == -22.5);
    hydroseq::testing::write_file(dir / "bad.csv", "id,x,y\n");
    CHECK_THROWS(parse_coordinates_csv(dir / "bad.csv"));
}
