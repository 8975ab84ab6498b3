#include "doctest.h"

#include <cmath>

#include "lobtree/limit_verify.hpp"

using namespace lobtree;

namespace {

LimitConfig cfg(std::uint64_t replicas, std::uint64_t seed) {
    LimitConfig c;
    c.replicas = replicas;
    c.seed = seed;
    return c;
}

const ModelParams kP(1.0, JumpDistribution::parse("-1:0.3,1:0.7"));
const ModelParams kUp(1.0, JumpDistribution::parse("1:1"));

}  // namespace

TEST_CASE("reference laws") {
    auto g = ReferenceLaw::reflected_gaussian_abs(2.0, 2.0);
    CHECK(g.scale() == doctest::Approx(2.0));
    CHECK(g.cdf(0.0) == 0.0);
    CHECK(g.cdf(-1.0) == 0.0);
    CHECK(g.cdf(2.0) == doctest::Approx(2 * normal_cdf(1.0) - 1));
    CHECK(g.mean() == doctest::Approx(2.0 * std::sqrt(2.0 / M_PI)));
    auto l = ReferenceLaw::levy_local_time(std::sqrt(2.0), 1.0);
    CHECK(l.scale() == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(l.mean() == doctest::Approx(std::sqrt(1.0 / M_PI)));

    Stream rng(3);
    std::vector<double> x(50000);
    for (auto& v : x) v = g.sample(rng);
    auto ks = ks_one_sample(x, [&](double v) { return g.cdf(v); });
    CHECK(ks.p_value > 0.001);
}

TEST_CASE("marginal draws have the requested shape and scaling") {
    auto draws = sample_marginals(kP, 10, {0.5, 1.0}, {0.1, 0.5}, {0.2}, cfg(50, 1));
    REQUIRE(draws.size() == 50);
    for (const auto& d : draws) {
        REQUIRE(d.price.size() == 2);
        REQUIRE(d.eps_occupation.size() == 2);
        REQUIRE(d.eps_occupation[0].size() == 2);
        REQUIRE(d.mass_upto[1].size() == 1);
        CHECK(d.price[1] * 10 == doctest::Approx(std::round(d.price[1] * 10)));
        CHECK(d.l_price[0] <= d.l_price[1]);
        CHECK(d.l_mass[1] <= d.l_price[1] + 1e-12);
        CHECK(d.mass_upto[1][0] <= d.mass[1] + 1e-12);
    }
    auto again = sample_marginals(kP, 10, {0.5, 1.0}, {0.1, 0.5}, {0.2}, cfg(50, 1));
    for (std::size_t i = 0; i < draws.size(); ++i) CHECK(draws[i].mass == again[i].mass);
}

TEST_CASE("degenerate and exact cases") {
    auto zero = price_marginal_test(kP, 10, 0.0, cfg(100, 1));
    CHECK(zero.value == 0.0);
    CHECK(zero.pass);

    // With J = 1 the mass equals the price, so the deviation is exactly 0 and
    // the book is empty exactly when the price is 0.
    auto ratio = ratio_test(kUp, {5, 10}, 1.0, cfg(100, 2));
    CHECK(ratio.front().value == 0.0);
    CHECK(ratio.back().pass);
    auto idle = idle_fraction_test(kUp, 5000.0, cfg(2, 3));
    CHECK(idle.value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(idle.pass);

    CHECK_THROWS_AS(ratio_test(kP, {10}, 1.0, cfg(10, 1)), std::invalid_argument);
}

TEST_CASE("small-n marginal tests produce bounded statistics") {
    auto price = price_marginal_test(kP, 20, 1.0, cfg(400, 4));
    CHECK(price.value > 0.0);
    CHECK(price.value < 1.0);
    CHECK(price.sample_size == 400);
    auto mass = mass_marginal_test(kP, 20, 1.0, cfg(400, 5));
    REQUIRE(mass.size() == 2);
    CHECK(mass[1].statistic == "mean_relative_error");
}

TEST_CASE("local time rows") {
    auto rows = local_time_tests(kP, 20, 1.0, {0.4, 0.2, 0.1}, cfg(300, 6));
    bool saw_ratio = false;
    for (const auto& r : rows) {
        CHECK(std::isfinite(r.value));
        saw_ratio = saw_ratio || r.statistic == "ratio_L_mass_over_L_price";
    }
    CHECK(saw_ratio);
}

TEST_CASE("excursion samples from the chain and from trees") {
    auto c = ctmc_excursions(kP, 1, 100000, cfg(500, 7));
    auto t = tree_excursions(kP, 1, 100000, cfg(500, 7));
    CHECK(c.steps.size() + c.censored == 500);
    CHECK(t.steps.size() + t.censored == 500);
    for (double h : c.height) CHECK(h >= 1.0);
    for (double s : t.steps) CHECK(s >= 1.0);
    auto rows = coupling_equivalence_test(kP, 0, cfg(2000, 8));
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) CHECK(r.p_value.has_value());
}

TEST_CASE("test result judging and csv") {
    TestResult r;
    r.experiment = "e";
    r.statistic = "s";
    r.value = 0.05;
    r.threshold = 0.08;
    r.judge();
    CHECK(r.pass);
    r.upper = false;
    r.judge();
    CHECK_FALSE(r.pass);
    r.inconclusive = true;
    r.judge();
    CHECK_FALSE(r.pass);
    CHECK(r.csv_row().find("inconclusive") != std::string::npos);
}
