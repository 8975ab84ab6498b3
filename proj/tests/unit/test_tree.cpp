#include "doctest.h"

#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "lobtree/tree.hpp"

using namespace lobtree;

namespace {

const JumpDistribution kJ = JumpDistribution::parse("-1:0.3,1:0.7");
const JumpDistribution kJ2 = JumpDistribution::parse("-2:0.15,-1:0.1,0:0.1,1:0.65");

std::optional<ColoredTree> draw(std::int64_t x, std::uint64_t key, const JumpDistribution& j,
                                std::size_t cap = 200000) {
    auto t = sample_tree_from_key(x, NodeKey{key}, j, cap);
    if (std::holds_alternative<Capped>(t)) return std::nullopt;
    return std::get<ColoredTree>(std::move(t));
}

// Node is in B(T) iff every strict ancestor has label >= the root's.
bool in_barrier(const ColoredTree& t, NodeId v) {
    const auto x = t.root_label();
    for (NodeId p = t.node(v).parent; p != kNoNode; p = t.node(p).parent)
        if (t.node(p).label < x) return false;
    return true;
}

}  // namespace

TEST_CASE("single node tree") {
    auto t = ColoredTree::single(3);
    CHECK(t.size() == 1);
    CHECK(t.height() == 1);
    CHECK(t.psi_star() == 3);
    auto tr = explore(t, true);
    CHECK(tr.tau == 1);
    CHECK(tr.barrier_size == 1);
    CHECK(tr.killed == 0);
    REQUIRE(tr.steps.size() == 1);
    CHECK(tr.steps[0].kind == StepKind::red);
    CHECK(contour(t) == std::vector<std::int32_t>{1, 0});
}

TEST_CASE("hand-built trees: traces and the step identity") {
    SUBCASE("one killed child") {
        auto t = ColoredTree::single(1);
        t.add_child(0, -1);
        auto tr = explore(t, true);
        CHECK(tr.tau == 2);
        CHECK(tr.killed == 1);
        CHECK(tr.steps[0].kind == StepKind::green);
        CHECK(tr.steps[0].label == 0);
        CHECK(tr.steps[1].kind == StepKind::red);
        CHECK(tr.steps[1].label == 1);
        CHECK(killed_set(t) == std::vector<NodeId>{1});
    }
    SUBCASE("one child above") {
        auto t = ColoredTree::single(1);
        t.add_child(0, 1);
        auto tr = explore(t, true);
        CHECK(tr.tau == 3);
        CHECK(tr.to_csv() == "k,event,node_label\n1,green,2\n2,red,2\n3,red,1\n");
    }
    SUBCASE("ties go to the last node in lexicographic order") {
        auto t = ColoredTree::single(1);
        const NodeId a = t.add_child(0, 0);
        t.add_child(a, 1);
        t.add_child(0, 0);
        auto tr = explore(t, true);
        // root -> a (1); a is last among label-1 greens -> its child (2);
        // child red; a red; root -> b; b red; root red.
        std::vector<std::pair<StepKind, std::int64_t>> expect{
            {StepKind::green, 1}, {StepKind::green, 2}, {StepKind::red, 2}, {StepKind::red, 1},
            {StepKind::green, 1}, {StepKind::red, 1},   {StepKind::red, 1}};
        REQUIRE(tr.steps.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) {
            CHECK(tr.steps[i].kind == expect[i].first);
            CHECK(tr.steps[i].label == expect[i].second);
        }
        CHECK(tr.tau == 2 * 4 - 0 - 1);
    }
    SUBCASE("descendants of killed nodes are never explored") {
        auto t = ColoredTree::single(2);
        const NodeId k = t.add_child(0, -1);
        const NodeId up = t.add_child(k, 1);
        t.add_child(up, 1);
        CHECK(barrier_tree(t).size() == 2);
        auto tr = explore(t, false);
        CHECK(tr.barrier_size == 2);
        CHECK(tr.killed == 1);
        CHECK(tr.tau == 2);
        CHECK(t.node(up).color == Color::white);
    }
}

TEST_CASE("explore requires the initial coloring") {
    auto t = ColoredTree::single(1);
    t.add_child(0, 1);
    explore(t);
    CHECK_THROWS_AS(explore(t), std::invalid_argument);
    t.reset_colors();
    CHECK_NOTHROW(explore(t));
}

TEST_CASE("eager and frontier-only exploration agree step by step") {
    int compared = 0;
    for (const auto* j : {&kJ, &kJ2}) {
        for (std::uint64_t k = 0; k < 3000; ++k) {
            auto t = draw(1, mix64(k, 17), *j, 20000);
            if (!t) continue;
            auto tr = explore(*t, true);
            LazyExploreOptions opt;
            opt.record_steps = true;
            auto lz = explore_lazy(1, NodeKey{mix64(k, 17)}, *j, opt);
            REQUIRE(lz.complete());
            REQUIRE(lz.steps == tr.tau);
            REQUIRE(lz.barrier_size == tr.barrier_size);
            REQUIRE(lz.killed == tr.killed);
            REQUIRE(lz.trace.size() == tr.steps.size());
            for (std::size_t i = 0; i < tr.steps.size(); ++i) {
                REQUIRE(lz.trace[i].kind == tr.steps[i].kind);
                REQUIRE(lz.trace[i].label == tr.steps[i].label);
            }
            ++compared;
        }
    }
    CHECK(compared > 5900);
}

TEST_CASE("killed set and barrier tree against brute force") {
    for (std::uint64_t k = 0; k < 500; ++k) {
        auto t = draw(2, mix64(k, 5), kJ2, 50000);
        if (!t) continue;
        std::vector<NodeId> brute;
        std::int64_t in_b = 0;
        for (NodeId v = 0; v < static_cast<NodeId>(t->size()); ++v) {
            if (!in_barrier(*t, v)) continue;
            ++in_b;
            if (t->node(v).label < t->root_label()) brute.push_back(v);
        }
        CHECK(killed_set(*t) == brute);
        auto b = barrier_tree(*t);
        CHECK(static_cast<std::int64_t>(b.size()) == in_b);
        CHECK(killed_set(b).size() == brute.size());
        auto tr = explore(*t);
        CHECK(tr.tau == 2 * in_b - static_cast<std::int64_t>(brute.size()) - 1);
        auto g = tr.green_measure(0, t->root_label());
        CHECK(g == std::map<std::int64_t, std::int64_t>{{2, 1}});
    }
}

TEST_CASE("green measure at the end holds exactly the killed nodes") {
    for (std::uint64_t k = 0; k < 300; ++k) {
        auto t = draw(1, mix64(k, 9), kJ, 50000);
        if (!t) continue;
        auto tr = explore(*t, true);
        auto g = tr.green_measure(tr.tau, 1);
        std::int64_t total = 0;
        for (auto [label, c] : g) {
            CHECK(label < 1);
            total += c;
        }
        CHECK(total == tr.killed);
        CHECK_THROWS_AS(tr.green_measure(tr.tau + 1, 1), std::out_of_range);
    }
}

TEST_CASE("tree structure helpers") {
    for (std::uint64_t k = 0; k < 300; ++k) {
        auto t = draw(0, mix64(k, 3), kJ2, 50000);
        if (!t) continue;
        auto gen = generation_sizes(*t);
        std::int64_t sum = 0;
        for (auto z : gen) sum += z;
        CHECK(sum == static_cast<std::int64_t>(t->size()));
        CHECK(static_cast<std::int32_t>(gen.size()) == t->height());
        auto c = contour(*t);
        REQUIRE(c.size() == 2 * t->size());
        CHECK(c.front() == 1);
        CHECK(c.back() == 0);
        for (std::size_t i = 1; i < c.size(); ++i) CHECK(std::abs(c[i] - c[i - 1]) == 1);
        for (std::int32_t m = 1; m <= t->height(); ++m) {
            const std::int64_t below = gen[static_cast<std::size_t>(m - 1)];
            const std::int64_t above = m < t->height() ? gen[static_cast<std::size_t>(m)] : 0;
            CHECK(visits(c, m) == below + above);
            CHECK(hits(c, m));
        }
        CHECK_FALSE(hits(c, t->height() + 1));
        auto cl = clamp_labels(*t);
        for (std::size_t v = 0; v < t->size(); ++v)
            CHECK(cl.nodes()[v].label == std::max<std::int64_t>(t->nodes()[v].label, 0));
    }
}

TEST_CASE("tree size law matches the Catalan pmf") {
    // P(|T| = k) = C_{k-1} / 2^{2k-1}.
    const int n = 100000;
    std::map<std::size_t, int> freq;
    Stream rng(77);
    for (int i = 0; i < n; ++i) {
        auto t = sample_tree(0, kJ, rng, 100);
        if (std::holds_alternative<ColoredTree>(t)) ++freq[std::get<ColoredTree>(t).size()];
    }
    double p = 0.5;
    for (std::size_t k = 1; k <= 6; ++k) {
        const double se = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(freq[k] / double(n) - p) < 5 * se);
        p *= (2.0 * k - 1.0) / (2.0 * (k + 1.0));
    }
}

TEST_CASE("tree height tail matches 1/u") {
    const int n = 100000;
    Stream rng(78);
    std::map<int, int> ge;
    for (int i = 0; i < n; ++i) {
        auto t = sample_tree(0, kJ, rng, 10'000'000, 6);
        const auto h = std::get<ColoredTree>(t).height();
        for (int u = 1; u <= 6; ++u) ge[u] += h >= u;
    }
    for (int u = 1; u <= 6; ++u) {
        const double p = 1.0 / u;
        CHECK(std::abs(ge[u] / double(n) - p) < 5 * std::sqrt(p * (1 - p) / n) + 1e-12);
    }
}

TEST_CASE("same key gives the same tree regardless of caps") {
    for (std::uint64_t k = 0; k < 200; ++k) {
        auto full = draw(1, k, kJ, 100000);
        if (!full) continue;
        auto shallow = sample_tree_from_key(1, NodeKey{k}, kJ, 100000, 3);
        const auto& s = std::get<ColoredTree>(shallow);
        std::int64_t upto3 = 0;
        for (const auto& node : full->nodes()) upto3 += node.depth <= 3;
        CHECK(static_cast<std::int64_t>(s.size()) == upto3);
        for (std::size_t v = 0; v < s.size(); ++v)
            if (s.nodes()[v].depth == 1) CHECK(s.nodes()[v].label == full->nodes()[v].label);
    }
}

TEST_CASE("full-tree walk with a label ceiling") {
    for (std::uint64_t k = 0; k < 300; ++k) {
        auto t = draw(1, mix64(k, 11), kJ, 50000);
        if (!t) continue;
        std::multiset<std::int64_t> seen;
        auto unexpanded =
            walk_full_tree(1, NodeKey{mix64(k, 11)}, kJ, 1'000'000, [&](std::int64_t l, std::int32_t) { seen.insert(l); });
        CHECK(unexpanded == 0);
        std::multiset<std::int64_t> expect;
        for (const auto& node : t->nodes()) expect.insert(node.label);
        CHECK(seen == expect);

        const std::int64_t ceil = 4;
        std::int64_t count = 0;
        walk_full_tree(1, NodeKey{mix64(k, 11)}, kJ, ceil, [&](std::int64_t, std::int32_t) { ++count; });
        std::int64_t brute = 0;
        for (NodeId v = 0; v < static_cast<NodeId>(t->size()); ++v) {
            bool ok = true;
            for (NodeId p = t->node(v).parent; p != kNoNode; p = t->node(p).parent) ok = ok && t->node(p).label < ceil;
            brute += ok;
        }
        CHECK(count == brute);
    }
}

TEST_CASE("descendant drop bound dominates the exact expectation") {
    // Expected number of descendants with label at least d below: sum_m P(S_m <= -d).
    double previous = INFINITY;
    for (int d : {3, 6, 10}) {
        std::map<std::int64_t, double> dist{{0, 1.0}};
        double exact = 0.0;
        for (int m = 1; m < 3000; ++m) {
            std::map<std::int64_t, double> next;
            for (auto [s, p] : dist)
                for (auto [j, q] : kJ.pmf()) next[s + j] += p * q;
            dist.swap(next);
            for (auto [s, p] : dist)
                if (s <= -d) exact += p;
        }
        const double bound = descendant_drop_bound(kJ, d);
        CHECK(bound >= exact);
        CHECK(bound < previous);
        previous = bound;
    }
    CHECK(previous < 0.05);
}

TEST_CASE("lazy exploration pruning and stop rules") {
    for (std::uint64_t k = 0; k < 500; ++k) {
        const NodeKey key{mix64(k, 23)};
        auto full = explore_lazy(1, key, kJ);
        LazyExploreOptions high;
        high.label_ceiling = 1'000'000;
        auto same = explore_lazy(1, key, kJ, high);
        CHECK(same.steps == full.steps);
        CHECK(same.pruned == 0);

        LazyExploreOptions stop;
        stop.stop_at_label = 4;
        stop.label_ceiling = 4;
        auto s = explore_lazy(1, key, kJ, stop);
        CHECK(s.stopped_early == (full.psi_star >= 4));
        CHECK(meets_condition(Condition::psi_star, 3, 1, key, kJ) == (full.psi_star > 3));
        CHECK(meets_condition(Condition::tau, 7, 1, key, kJ) == (full.steps > 7));

        LazyExploreOptions cap;
        cap.max_steps = 5;
        auto c = explore_lazy(1, key, kJ, cap);
        CHECK(c.step_capped == (full.steps > 5));
    }
}

TEST_CASE("conditioned sampling meets its condition") {
    Stream rng(5);
    for (int i = 0; i < 20; ++i) {
        auto s = sample_conditioned(Condition::height, 5, 0, kJ, rng, 1'000'000);
        CHECK(s.tree.height() > 5);
        CHECK(s.attempts >= 1);
        auto p = sample_conditioned(Condition::psi_star, 5, 1, kJ, rng, 1'000'000);
        CHECK(barrier_tree(p.tree).psi_star() > 5);
        auto q = sample_conditioned(Condition::tau, 9, 1, kJ, rng, 1'000'000);
        CHECK(explore(q.tree).tau > 9);
    }
    CHECK_THROWS_AS(sample_conditioned(Condition::height, 1'000'000, 0, kJ, rng, 10), BudgetExhausted);
}

TEST_CASE("exploration book path is a valid book path") {
    const ModelParams p(1.0, kJ2);
    for (Level a : {Level{0}, Level{2}}) {
        for (std::uint64_t k = 0; k < 500; ++k) {
            Stream time_rng(mix64(k, 1));
            auto ex = exploration_to_book_path(a, NodeKey{mix64(k, 2)}, p, time_rng, 0, true);
            REQUIRE_FALSE(ex.capped);
            CHECK(ex.jump_count == ex.tau + 1);
            REQUIRE(static_cast<std::int64_t>(ex.embedded_path.size()) == ex.jump_count);
            OrderBook book;
            for (Level l = 0; l <= a - 1; ++l) book.add_at(l);
            if (a > 0) book.add_at(a);
            CHECK(ex.embedded_path.front().kind == EventKind::add);
            CHECK(ex.embedded_path.front().level == a + 1);
            std::int64_t adds = 0, below = 0;
            Level top = 0;
            for (std::size_t i = 0; i < ex.embedded_path.size(); ++i) {
                const auto& d = ex.embedded_path[i];
                if (i > 0) REQUIRE(book.price() > a);
                if (d.kind == EventKind::add) {
                    REQUIRE(d.level <= book.price() + 1);
                    REQUIRE(d.level >= std::max<Level>(book.price() - kJ2.j_star(), 0));
                    book.add_at(d.level);
                    ++adds;
                    below += d.level <= a;
                } else {
                    REQUIRE(d.level == book.price());
                    book.remove_at_price();
                }
                top = std::max(top, book.price());
            }
            CHECK(book.price() <= a);
            CHECK(below == ex.deposited_below);
            CHECK(ex.jump_count == 2 * adds - below);
            CHECK(ex.height == top - a);
            REQUIRE(ex.epochs.size() == ex.embedded_path.size());
            CHECK(ex.epochs.front() == 0.0);
            for (std::size_t i = 1; i < ex.epochs.size(); ++i) CHECK(ex.epochs[i] > ex.epochs[i - 1]);
            CHECK(ex.duration == doctest::Approx(ex.epochs.back()));
        }
    }
}

TEST_CASE("forest exploration moves the book validly and empties it") {
    Stream rng(31);
    int capped = 0;
    for (int i = 0; i < 1000; ++i) {
        OrderBook initial = OrderBook::parse("0:2,1:1,2:3,3:1");
        auto forest = sample_forest(initial, rng);
        CHECK(forest.roots.size() == 7);
        auto path = explore_forest(forest, kJ2, 1'000'000);
        capped += path.capped;
        OrderBook book = initial;
        for (const auto& d : path.deltas) {
            if (d.kind == EventKind::add) {
                REQUIRE(d.level <= book.price() + 1);
                REQUIRE(d.level >= std::max<Level>(book.price() - kJ2.j_star(), 0));
                book.add_at(d.level);
            } else {
                REQUIRE(d.level == book.price());
                book.remove_at_price();
            }
        }
        if (!path.capped) CHECK(book.empty());
    }
    CHECK(capped < 30);
}

TEST_CASE("single-tree forest path equals eager exploration of the reflected tree") {
    for (std::uint64_t k = 0; k < 1000; ++k) {
        auto t = draw(0, mix64(k, 41), kJ2, 20000);
        if (!t) continue;
        // Relabel as a walk reflected at 0; node ids are preorder, so parents come first.
        ColoredTree r = ColoredTree::single(0);
        for (NodeId v = 1; v < static_cast<NodeId>(t->size()); ++v) {
            const auto& node = t->node(v);
            const std::int64_t parent_label = r.node(node.parent).label;
            const std::int64_t label = std::max<std::int64_t>(parent_label + node.increment, 0);
            r.add_child(node.parent, label - parent_label);
        }
        auto tr = explore(r, true);
        Forest f;
        f.roots.push_back({0, NodeKey{mix64(k, 41)}});
        auto path = explore_forest(f, kJ2);
        REQUIRE(path.deltas.size() == tr.steps.size());
        for (std::size_t i = 0; i < tr.steps.size(); ++i) {
            REQUIRE((path.deltas[i].kind == EventKind::add) == (tr.steps[i].kind == StepKind::green));
            REQUIRE(path.deltas[i].level == tr.steps[i].label);
        }
    }
}
