#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tsgen/errors.hpp"
#include "tsgen/rng.hpp"
#include "tsgen/series.hpp"

using namespace tsgen;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = (fs::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("sines: shapes, range, determinism") {
    auto set = generate_sines(3, 5, 24, 7);
    REQUIRE(set.size() == 3);
    for (const auto& s : set) {
        CHECK(s.d == 5);
        CHECK(s.t_len == 24);
        for (double v : s.values) {
            CHECK(v <= 1.0);
            CHECK(v >= -1.0);
        }
    }
    auto again = generate_sines(3, 5, 24, 7);
    for (int k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < set[k].values.size(); ++i)
            CHECK(set[k].values[i] == again[k].values[i]);  // bitwise

    auto other = generate_sines(3, 5, 24, 8);
    bool any_diff = false;
    for (std::size_t i = 0; i < set[0].values.size(); ++i)
        if (set[0].values[i] != other[0].values[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("sines: zero frequency gives a constant feature") {
    // sin(2*pi*0*t + phase) = sin(phase) for every t.
    const double phase = 0.73;
    for (int t = 0; t < 10; ++t)
        CHECK(std::sin(2 * 3.14159265358979 * 0.0 * t + phase) ==
              doctest::Approx(std::sin(phase)));
}

TEST_CASE("csv loader reads long-format series") {
    const std::string path = write_temp("tsgen_ok.csv", "a,b\n1,2\n3,4\n5,6\n7,8\n9,10\n");
    RegularSeries s = load_csv_series(path);
    CHECK(s.d == 2);
    CHECK(s.t_len == 5);
    CHECK(s.at(0, 0) == 1.0);
    CHECK(s.at(1, 4) == 10.0);
    CHECK(s.feature_names[1] == "b");
}

TEST_CASE("csv loader rejects degenerate and malformed input") {
    const std::string empty = write_temp("tsgen_empty.csv", "a,b\n");
    CHECK_THROWS_WITH_AS(load_csv_series(empty), doctest::Contains("empty data"), DataError);

    const std::string bad = write_temp("tsgen_bad.csv", "a,b\n1,2\n3,4\n5,oops\n");
    CHECK_THROWS_WITH_AS(load_csv_series(bad), doctest::Contains("row 3"), DataError);

    const std::string inf = write_temp("tsgen_inf.csv", "a,b\n1,2\n3,inf\n5,6\n");
    CHECK_THROWS_WITH_AS(load_csv_series(inf), doctest::Contains("non-finite"), DataError);
}

TEST_CASE("normalization maps to [-1,1] and inverts") {
    IrregularSeries obs;
    obs.d = 2;
    obs.t_len = 3;
    obs.values = {0, 5, 10, 4, 4, 4};
    obs.observed = {1, 1, 1, 1, 1, 1};
    NormStats stats = compute_stats({obs});
    CHECK(stats.min_v[0] == 0.0);
    CHECK(stats.max_v[0] == 10.0);

    RegularSeries s(2, 3);
    s.values = {0, 5, 10, 4, 4, 4};
    RegularSeries n = normalize(s, stats);
    CHECK(n.at(0, 0) == doctest::Approx(-1.0));  // value at min
    CHECK(n.at(0, 1) == doctest::Approx(0.0));   // midpoint
    CHECK(n.at(0, 2) == doctest::Approx(1.0));
    CHECK(n.at(1, 0) == 0.0);  // constant feature pins to 0
    CHECK(n.at(1, 2) == 0.0);

    RegularSeries back = denormalize(n, stats);
    for (std::size_t i = 0; i < s.values.size(); ++i)
        CHECK(back.values[i] == doctest::Approx(s.values[i]).epsilon(1e-6));
}

TEST_CASE("normalize/denormalize roundtrip stays within 1e-6 relative error") {
    Rng rng(99);
    IrregularSeries obs;
    obs.d = 4;
    obs.t_len = 50;
    obs.values.resize(200);
    obs.observed.assign(200, 1);
    for (auto& v : obs.values) v = rng.uniform(-30.0, 70.0);
    NormStats stats = compute_stats({obs});
    RegularSeries s(4, 50);
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = obs.values[i];
    RegularSeries round = denormalize(normalize(s, stats), stats);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        const double rel = std::abs(round.values[i] - s.values[i]) /
                           std::max(1.0, std::abs(s.values[i]));
        CHECK(rel < 1e-6);
    }
}

TEST_CASE("windows: counts, identity, errors, coverage") {
    RegularSeries s(2, 100);
    for (int i = 0; i < 2; ++i)
        for (int t = 0; t < 100; ++t) s.at(i, t) = i * 1000 + t;

    auto w = windows(s, 24, 1);
    CHECK(w.size() == 77);  // floor((100-24)/1)+1
    CHECK(w[0].at(0, 0) == 0.0);
    CHECK(w[76].at(0, 23) == 99.0);

    // stride=1 covers every source index
    std::vector<int> covered(100, 0);
    for (std::size_t k = 0; k < w.size(); ++k)
        for (int t = 0; t < 24; ++t) covered[k + t] = 1;
    for (int t = 0; t < 100; ++t) CHECK(covered[t] == 1);

    RegularSeries exact(2, 24);
    for (int i = 0; i < 2; ++i)
        for (int t = 0; t < 24; ++t) exact.at(i, t) = i - t;
    auto single = windows(exact, 24, 1);
    REQUIRE(single.size() == 1);
    for (std::size_t i = 0; i < exact.values.size(); ++i)
        CHECK(single[0].values[i] == exact.values[i]);

    RegularSeries small(1, 10);
    CHECK_THROWS_AS(windows(small, 24, 1), ConfigError);
}

TEST_CASE("split produces disjoint covering index sets") {
    DatasetSplit split = split_indices(100, 0.8, 0.1, 42);
    CHECK(split.train.size() == 80);
    CHECK(split.val.size() == 10);
    CHECK(split.test.size() == 10);
    std::vector<int> seen(100, 0);
    for (int i : split.train) ++seen[i];
    for (int i : split.val) ++seen[i];
    for (int i : split.test) ++seen[i];
    for (int i = 0; i < 100; ++i) CHECK(seen[i] == 1);
}

TEST_CASE("irregular csv roundtrip keeps mask and values") {
    IrregularSeries s;
    s.d = 2;
    s.t_len = 4;
    s.values.assign(8, std::numeric_limits<double>::quiet_NaN());
    s.observed.assign(8, 0);
    auto set_obs = [&](int i, int t, double v) {
        s.values[i * 4 + t] = v;
        s.observed[i * 4 + t] = 1;
    };
    set_obs(0, 0, 1.5);
    set_obs(0, 3, -2.25);
    set_obs(1, 1, 0.125);
    const std::string path = (fs::temp_directory_path() / "tsgen_irr.csv").string();
    write_csv_irregular(path, s);
    IrregularSeries back = load_csv_irregular(path);
    CHECK(back.d == 2);
    CHECK(back.t_len == 4);
    for (int i = 0; i < 2; ++i)
        for (int t = 0; t < 4; ++t) {
            CHECK(back.observed_at(i, t) == s.observed_at(i, t));
            if (s.observed_at(i, t)) CHECK(back.value_at(i, t) == s.value_at(i, t));
        }
}
