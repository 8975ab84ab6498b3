#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "lobtree/lob_sim.hpp"
#include "lobtree/stats.hpp"

using namespace lobtree;

namespace {

ModelParams params(const char* pmf = "-1:0.3,1:0.7", double lambda = 1.0) {
    return ModelParams(lambda, JumpDistribution::parse(pmf));
}

void apply(OrderBook& b, const Event& e) {
    if (e.kind == EventKind::add)
        b.add_at(e.level);
    else
        b.remove_at_price();
}

}  // namespace

TEST_CASE("simulation is a deterministic function of the stream") {
    auto p = params();
    Stream a = seed_streams(3, 0), b = seed_streams(3, 0), c = seed_streams(3, 1);
    auto ra = simulate(p, OrderBook{}, 500.0, a);
    auto rb = simulate(p, OrderBook{}, 500.0, b);
    auto rc = simulate(p, OrderBook{}, 500.0, c);
    REQUIRE(ra.events.size() == rb.events.size());
    for (std::size_t i = 0; i < ra.events.size(); ++i) {
        CHECK(ra.events[i].time == rb.events[i].time);
        CHECK(ra.events[i].level == rb.events[i].level);
    }
    CHECK(ra.final_book == rb.final_book);
    CHECK(ra.events.size() != rc.events.size());
}

TEST_CASE("recorded events replay to the recorded states") {
    auto p = params("-2:0.1,-1:0.2,0:0.1,1:0.6", 1.7);
    Stream rng = seed_streams(11, 0);
    SimulateOptions opt;
    opt.check_invariants = true;
    auto r = simulate(p, OrderBook{}, 20000.0, rng, opt);
    REQUIRE(r.events_recorded);
    REQUIRE(r.events.size() > 1000);
    OrderBook b = r.initial;
    double last = 0.0;
    for (const Event& e : r.events) {
        CHECK(e.time >= last);
        CHECK(e.time <= r.horizon);
        last = e.time;
        const Level before = b.price();
        if (e.kind == EventKind::add) {
            CHECK(e.level >= 0);
            CHECK(e.level <= before + 1);
            CHECK(e.level >= std::max<Level>(before - 2, 0));
        } else {
            CHECK(e.level == before);
            CHECK_FALSE(b.empty());
        }
        apply(b, e);
        REQUIRE(b.price() == e.price_after);
        REQUIRE(b.mass() == e.mass_after);
        REQUIRE(b.gap_free());
    }
    CHECK(b == r.final_book);
    CHECK(r.ell <= r.horizon);
    CHECK(r.time_mass_zero <= r.ell + 1e-9);
}

TEST_CASE("occupation accumulators are monotone in the level") {
    auto p = params();
    Stream rng = seed_streams(5, 2);
    SimulateOptions opt;
    opt.occupation_levels = {0, 1, 3, 10, 1000};
    opt.observe_times = {100.0, 400.0};
    auto r = simulate(p, OrderBook{}, 400.0, rng, opt);
    REQUIRE(r.occupation.size() == 5);
    CHECK(r.occupation[0] == doctest::Approx(r.ell));
    for (std::size_t i = 1; i < r.occupation.size(); ++i) CHECK(r.occupation[i] >= r.occupation[i - 1]);
    CHECK(r.occupation.back() == doctest::Approx(400.0));
    REQUIRE(r.observations.size() == 2);
    CHECK(r.observations[0].ell <= r.observations[1].ell);
    CHECK(r.observations[1].ell == doctest::Approx(r.ell));
}

TEST_CASE("rescaled observables agree with observations and replay") {
    auto p = params();
    Stream rng = seed_streams(8, 0);
    const std::int64_t n = 10;
    SimulateOptions opt;
    opt.observe_times = {100.0};
    auto r = simulate(p, OrderBook{}, 100.0, rng, opt);
    auto from_events = rescaled_observables(r, n, 1.0);
    auto from_obs = rescale(r.observations.at(0), n);
    CHECK(from_events.price == doctest::Approx(from_obs.price));
    CHECK(from_events.mass == doctest::Approx(from_obs.mass));
    CHECK(from_events.local_time_price == doctest::Approx(from_obs.local_time_price));
    CHECK(from_events.local_time_mass == doctest::Approx(from_obs.local_time_mass));
    CHECK(from_obs.local_time_price == doctest::Approx(r.ell / n));
    CHECK(from_obs.price == doctest::Approx(r.final_book.price() / 10.0));
    CHECK_THROWS_AS(rescaled_observables(r, n, 2.0), std::invalid_argument);

    CHECK(epsilon_occupation(r, n, 1.0, 1e6) == doctest::Approx(1e-6));
    double prev = 0.0;
    for (double eps : {0.1, 0.2, 0.5, 1.0, 3.0}) {
        const double leb = eps * epsilon_occupation(r, n, 1.0, eps);
        CHECK(leb >= prev - 1e-12);
        CHECK(leb <= 1.0 + 1e-9);
        prev = leb;
    }
    CHECK_THROWS_AS(epsilon_occupation(r, n, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("excursion tracker on a hand-built path") {
    ExcursionTracker tr(0, 0, true);
    const Event ev[] = {
        {1.0, EventKind::add, 1, 1, 1},
        {2.0, EventKind::add, 2, 2, 2},
        {3.0, EventKind::add, 0, 2, 3},
        {4.0, EventKind::remove, 2, 1, 2},
        {5.0, EventKind::remove, 1, 0, 1},
        {6.0, EventKind::add, 1, 1, 2},
    };
    for (const Event& e : ev) tr.on_event(e);
    CHECK(tr.completed() == 1);
    CHECK(tr.in_excursion());
    CHECK(tr.open_jump_count() == 1);
    tr.finish(7.0);
    const auto& rec = tr.records();
    REQUIRE(rec.size() == 2);
    CHECK(rec[0].complete);
    CHECK(rec[0].g == 1.0);
    CHECK(rec[0].d == 5.0);
    CHECK(rec[0].jump_count == 5);
    CHECK(rec[0].height == 2);
    CHECK(rec[0].deposited_below == 1);
    CHECK(rec[0].embedded_path.size() == 5);
    CHECK_FALSE(rec[1].complete);
    CHECK(rec[1].d == 7.0);
}

TEST_CASE("excursions: online tracking equals replay and the step identity holds") {
    auto p = params("-2:0.2,0:0.1,1:0.7");
    Stream rng = seed_streams(21, 0);
    SimulateOptions opt;
    opt.excursion_levels = {0, 3};
    auto r = simulate(p, OrderBook{}, 50000.0, rng, opt);
    for (Level a : {Level{0}, Level{3}}) {
        const auto& online = r.excursions.at(a);
        auto replay = extract_excursions(r, a, true);
        REQUIRE(online.size() == replay.size());
        REQUIRE(replay.size() > 50);
        for (std::size_t i = 0; i < replay.size(); ++i) {
            CHECK(online[i].jump_count == replay[i].jump_count);
            CHECK(online[i].g == replay[i].g);
            const auto& e = replay[i];
            if (!e.complete) continue;
            std::int64_t adds = 0;
            for (const auto& d : e.embedded_path) adds += d.kind == EventKind::add;
            CHECK(e.jump_count == 2 * adds - e.deposited_below);
            CHECK(e.d > e.g);
            CHECK(e.height >= 1);
        }
    }
}

TEST_CASE("stop after the first excursion and its jump cap") {
    auto p = params();
    Stream rng = seed_streams(4, 0);
    SimulateOptions opt;
    opt.record_events = false;
    opt.stop_after_first_excursion_above = 2;
    auto r = simulate(p, OrderBook{}, INFINITY, rng, opt);
    REQUIRE(r.excursions.at(2).size() == 1);
    CHECK(r.excursions.at(2)[0].complete);
    CHECK(r.final_book.price() <= 2);

    Stream rng2 = seed_streams(4, 0);
    opt.max_excursion_jumps = 1;
    auto capped = simulate(p, OrderBook{}, INFINITY, rng2, opt);
    CHECK(capped.truncated);
    CHECK_FALSE(capped.excursions.at(2).back().complete);
}

TEST_CASE("mass minus lambda times idle time has mean zero") {
    // Adds at rate lambda always, removals at rate lambda while nonempty.
    auto p = params("-1:0.3,1:0.7", 1.5);
    const double t = 200.0;
    auto stats = run_replicas<RunningStats>(
        4000, 99, 1,
        [&](Stream& s, std::uint64_t, RunningStats& acc) {
            SimulateOptions opt;
            opt.record_events = false;
            auto r = simulate(p, OrderBook{}, t, s, opt);
            acc.add(static_cast<double>(r.final_book.mass()) - p.lambda * r.time_mass_zero);
        },
        [](RunningStats& a, const RunningStats& b) { a.merge(b); });
    CHECK(std::abs(stats.mean()) < 4.0 * stats.std_error());
}

TEST_CASE("queue process") {
    auto p = params();
    Stream rng = seed_streams(1, 0);
    auto r = simulate(p, OrderBook{}, 5000.0, rng);
    auto q = queue_q(r);
    CHECK(q.idle_fraction >= 0.0);
    CHECK(q.idle_fraction <= 1.0);
    REQUIRE_FALSE(q.q_path.empty());
    for (std::size_t i = 1; i < q.q_path.size(); ++i) CHECK(q.q_path[i].first >= q.q_path[i - 1].first);
    CHECK(q.q_path.back().first <= r.ell + 1e-9);

    Stream rng2 = seed_streams(1, 1);
    auto high = simulate(p, OrderBook::parse("0:1,1:1,2:1,3:1,4:1,5:1,6:1,7:1,8:1"), 1e-6, rng2);
    CHECK_THROWS_AS(queue_q(high), std::domain_error);
}

TEST_CASE("price path hitting times") {
    PricePath p({{0, 0}, {1, 1}, {2, 2}, {3, 1}, {4, 0}, {5, 1}, {6, 0}}, 7.0);
    CHECK(p.at(2.5) == 2);
    CHECK(p.at(0.5) == 0);
    CHECK(*HittingTimes::D(p, 2.5) == 4.0);
    CHECK(*HittingTimes::G(p, 2.5) == 1.0);
    CHECK(*HittingTimes::T(p, 2) == 2.0);
    CHECK_FALSE(HittingTimes::T(p, 3).has_value());
    CHECK(*HittingTimes::g(p, 0, 2) == 1.0);
    CHECK(*HittingTimes::d(p, 0, 2) == 4.0);
    CHECK(*HittingTimes::U(p, 0, 2) == 3.0);
    CHECK(*HittingTimes::D_eps(p, 2.5, 1) == 3.0);
    auto s = p.shifted(2.5);
    CHECK(s.at(0.0) == 2);
    CHECK(s.at(1.0) == 1);
    CHECK(s.at(1.6) == 0);
    CHECK(s.end() == doctest::Approx(4.5));
    auto st = p.stopped(2.5);
    CHECK(st.at(6.5) == 2);
}

TEST_CASE("price path from a simulation matches the events") {
    auto p = params();
    Stream rng = seed_streams(2, 0);
    auto r = simulate(p, OrderBook{}, 300.0, rng);
    auto [shifted, stopped] = path_shift_stop(r, 100.0);
    auto full = PricePath::from_record(r);
    for (double u : {0.0, 3.3, 50.0, 150.0}) {
        CHECK(shifted.at(u) == full.at(100.0 + u));
        CHECK(stopped.at(100.0 + u) == full.at(100.0));
    }
    CHECK(full.at(300.0) == r.final_book.price());
}
