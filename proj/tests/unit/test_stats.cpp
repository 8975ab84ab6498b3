#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>
#include <algorithm>
#include <vector>

#include "lobtree/stats.hpp"

using namespace lobtree;

TEST_CASE("normal cdf") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-9));
    CHECK(normal_cdf(-1.0) == doctest::Approx(0.158655254).epsilon(1e-8));
}

TEST_CASE("running stats against direct formulas") {
    std::vector<double> x{2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0};
    RunningStats s;
    for (double v : x) s.add(v);
    CHECK(s.count() == 8);
    CHECK(s.mean() == doctest::Approx(5.0));
    CHECK(s.variance() == doctest::Approx(32.0 / 7.0));
    CHECK(s.std_error() == doctest::Approx(std::sqrt(32.0 / 7.0 / 8.0)));
    CHECK(s.min() == 2.0);
    CHECK(s.max() == 9.0);

    RunningStats a, b;
    for (std::size_t i = 0; i < x.size(); ++i) (i < 3 ? a : b).add(x[i]);
    a.merge(b);
    CHECK(a.mean() == doctest::Approx(s.mean()));
    CHECK(a.variance() == doctest::Approx(s.variance()));
    RunningStats empty;
    a.merge(empty);
    CHECK(a.count() == 8);
    CHECK(RunningStats{}.variance() == 0.0);
}

TEST_CASE("kolmogorov survival function") {
    CHECK(kolmogorov_sf(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(kolmogorov_sf(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
    CHECK(kolmogorov_sf(0.0) == doctest::Approx(1.0));
    CHECK(kolmogorov_sf(5.0) < 1e-10);
}

TEST_CASE("one-sample KS statistic") {
    std::vector<double> x{0.1, 0.4, 0.7};
    auto r = ks_one_sample(x, [](double v) { return v; });
    // Uniform cdf: sup over i of max(i/n - x_i, x_i - (i-1)/n).
    CHECK(r.statistic == doctest::Approx(std::max({1.0 / 3 - 0.1, 0.1, 2.0 / 3 - 0.4, 0.4 - 1.0 / 3, 1.0 - 0.7,
                                                    0.7 - 2.0 / 3})));
    CHECK(r.n == 3);

    Stream rng(1);
    std::vector<double> u(20000);
    for (auto& v : u) v = rng.uniform();
    auto ok = ks_one_sample(u, [](double v) { return std::clamp(v, 0.0, 1.0); });
    CHECK(ok.p_value > 0.001);
    auto bad = ks_one_sample(u, [](double v) { return std::clamp(v * v, 0.0, 1.0); });
    CHECK(bad.p_value < 1e-6);
}

TEST_CASE("two-sample KS handles ties jointly") {
    auto same = ks_two_sample({1, 1, 2, 2, 3}, {1, 1, 2, 2, 3});
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == doctest::Approx(1.0));
    auto r = ks_two_sample({1, 2, 3}, {4, 5, 6, 7});
    CHECK(r.statistic == doctest::Approx(1.0));
    CHECK(r.n == 3);
    CHECK(r.m == 4);
    auto t = ks_two_sample({0, 0, 1}, {0, 1, 1});
    CHECK(t.statistic == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("ranks and correlations") {
    std::vector<double> x{10, 20, 20, 30};
    CHECK(average_ranks(x) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
    std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 10}, c{5, 4, 3, 2, 1}, d{1, 8, 27, 64, 125};
    CHECK(pearson(a, b) == doctest::Approx(1.0));
    CHECK(pearson(a, c) == doctest::Approx(-1.0));
    CHECK(spearman(a, d) == doctest::Approx(1.0));
    CHECK(pearson(a, d) < 1.0);
    std::vector<double> e{1, 3, 2, 5, 4};
    // 1 - 6 sum d^2 / (n(n^2-1)), d = (0,1,1,1,1)
    CHECK(spearman(a, e) == doctest::Approx(1.0 - 6.0 * 4.0 / 120.0));
}

TEST_CASE("variance with error") {
    Stream rng(2);
    std::vector<double> x(200000);
    for (auto& v : x) v = rng.exponential(1.0);
    auto v = variance_with_error(x);
    // Exp(1): variance 1, m4 = 9, se ~ sqrt(8/n).
    CHECK(v.std_error == doctest::Approx(std::sqrt(8.0 / x.size())).epsilon(0.1));
    CHECK(std::abs(v.variance - 1.0) < 5 * v.std_error);
}

TEST_CASE("replica runner is independent of the thread count") {
    auto body = [](Stream& s, std::uint64_t i, RunningStats& acc) { acc.add(s.uniform() + 1e-3 * double(i % 7)); };
    auto merge = [](RunningStats& a, const RunningStats& b) { a.merge(b); };
    auto one = run_replicas<RunningStats>(20000, 9, 1, body, merge);
    auto four = run_replicas<RunningStats>(20000, 9, 4, body, merge);
    CHECK(one.count() == 20000);
    CHECK(one.mean() == four.mean());
    CHECK(one.variance() == four.variance());

    auto v1 = collect_replicas(10000, 4, 1, [](Stream& s, std::uint64_t) { return s.uniform(); });
    auto v3 = collect_replicas(10000, 4, 3, [](Stream& s, std::uint64_t) { return s.uniform(); });
    CHECK(v1 == v3);
    CHECK(v1[17] == seed_streams(4, 17).uniform());
}

TEST_CASE("streams") {
    Stream a(5), b(5);
    for (int i = 0; i < 10; ++i) CHECK(a() == b());
    CHECK(a.counter() == 10);
    CHECK(a.split(1).key() == b.split(1).key());
    CHECK(a.split(1).key() != a.split(2).key());
    std::set<std::uint64_t> keys;
    for (std::uint64_t s = 0; s < 100; ++s)
        for (std::uint64_t i = 0; i < 100; ++i) keys.insert(seed_streams(s, i).key());
    CHECK(keys.size() == 10000);
    Stream c(3);
    RunningStats u;
    for (int i = 0; i < 100000; ++i) {
        const double x = c.uniform();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
        u.add(x);
    }
    CHECK(std::abs(u.mean() - 0.5) < 5 * std::sqrt(1.0 / 12 / 100000));
}
