#include "lobtree/limit_verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "lobtree/tree.hpp"

namespace lobtree {

namespace {

constexpr double kSqrt2OverPi = 0.79788456080286535588;  // E|N(0,1)|

std::string num(double x) {
    std::ostringstream os;
    os << std::setprecision(10) << x;
    return os.str();
}

double mean_of(const std::vector<double>& v) {
    RunningStats s;
    for (double x : v) s.add(x);
    return s.mean();
}

}  // namespace

ReferenceLaw ReferenceLaw::reflected_gaussian_abs(double sigma2, double t) {
    if (!(sigma2 >= 0.0) || !(t >= 0.0)) throw std::invalid_argument("reference law needs sigma2, t >= 0");
    return {Kind::reflected_gaussian_abs, std::sqrt(sigma2 * t)};
}

ReferenceLaw ReferenceLaw::levy_local_time(double sigma, double t) {
    if (!(sigma > 0.0) || !(t >= 0.0)) throw std::invalid_argument("reference law needs sigma > 0, t >= 0");
    return {Kind::levy_local_time, std::sqrt(t) / sigma};
}

double ReferenceLaw::cdf(double x) const noexcept {
    if (x < 0.0) return 0.0;
    if (scale_ == 0.0) return 1.0;
    return 2.0 * normal_cdf(x / scale_) - 1.0;
}

double ReferenceLaw::mean() const noexcept { return scale_ * kSqrt2OverPi; }

double ReferenceLaw::sample(Stream& rng) const {
    // Box-Muller on two uniforms in (0, 1].
    const double r = std::sqrt(-2.0 * std::log(rng.uniform_pos()));
    return scale_ * std::abs(r * std::cos(2.0 * 3.14159265358979323846 * rng.uniform()));
}

std::string TestResult::csv_row() const {
    std::ostringstream os;
    os << experiment << ',' << statistic << ',' << num(value) << ',' << num(threshold) << ','
       << (inconclusive ? "inconclusive" : pass ? "true" : "false");
    return os.str();
}

std::vector<MarginalDraw> sample_marginals(const ModelParams& params, std::int64_t n, const std::vector<double>& t_list,
                                           const std::vector<double>& eps_list, const std::vector<double>& y_list,
                                           const LimitConfig& cfg) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    if (t_list.empty() || !std::is_sorted(t_list.begin(), t_list.end()) || t_list.front() < 0.0)
        throw std::invalid_argument("t_list must be nonempty, nonnegative and increasing");
    const double nd = static_cast<double>(n);
    SimulateOptions opts;
    opts.record_events = false;
    for (double t : t_list) opts.observe_times.push_back(nd * nd * t);
    for (double eps : eps_list) {
        if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
        opts.occupation_levels.push_back(static_cast<Level>(std::floor(eps * nd + 1e-9)));
    }
    opts.observe_books = !y_list.empty();
    const double horizon = opts.observe_times.back();
    const OrderBook empty;

    return run_replicas<std::vector<MarginalDraw>>(
        cfg.replicas, cfg.seed, cfg.threads,
        [&](Stream& s, std::uint64_t, std::vector<MarginalDraw>& acc) {
            const PathRecord rec = simulate(params, empty, horizon, s, opts);
            if (rec.observations.size() != t_list.size()) throw std::logic_error("missing observation");
            MarginalDraw d;
            for (const Observation& obs : rec.observations) {
                const RescaledObservables r = rescale(obs, n);
                d.price.push_back(r.price);
                d.mass.push_back(r.mass);
                d.l_price.push_back(r.local_time_price);
                d.l_mass.push_back(r.local_time_mass);
                std::vector<double> occ;
                for (std::size_t k = 0; k < eps_list.size(); ++k)
                    occ.push_back(obs.occupation[k] / (nd * nd * eps_list[k]));
                d.eps_occupation.push_back(std::move(occ));
                std::vector<double> upto;
                if (obs.book) {
                    const ScaledMeasure m(*obs.book, n);
                    for (double y : y_list) upto.push_back(m.mass_upto(y));
                }
                d.mass_upto.push_back(std::move(upto));
            }
            acc.push_back(std::move(d));
        },
        [](std::vector<MarginalDraw>& into, std::vector<MarginalDraw>& from) {
            for (auto& d : from) into.push_back(std::move(d));
        });
}

namespace {

TestResult ks_against(const std::string& experiment, const std::string& statistic, std::vector<double> sample,
                      const ReferenceLaw& ref, double threshold, std::int64_t n, const LimitConfig& cfg) {
    TestResult r;
    r.experiment = experiment;
    r.statistic = statistic;
    r.threshold = threshold;
    r.n = n;
    r.replicas = cfg.replicas;
    r.seed = cfg.seed;
    r.sample_size = sample.size();
    if (ref.scale() == 0.0) {
        // Degenerate reference at 0: the distance is the mass away from 0.
        const auto off = std::count_if(sample.begin(), sample.end(), [](double x) { return x != 0.0; });
        r.value = static_cast<double>(off) / static_cast<double>(sample.size());
    } else {
        const auto ks = ks_one_sample(std::move(sample), [&](double x) { return ref.cdf(x); });
        r.value = ks.statistic;
        r.p_value = ks.p_value;
    }
    r.note = "reference scale " + num(ref.scale());
    r.judge();
    return r;
}

std::vector<double> column(const std::vector<MarginalDraw>& draws, std::vector<double> MarginalDraw::*field,
                           std::size_t i) {
    std::vector<double> out;
    out.reserve(draws.size());
    for (const auto& d : draws) out.push_back((d.*field)[i]);
    return out;
}

TestResult relative_check(const std::string& experiment, const std::string& statistic, double estimate,
                          double reference, double tolerance, std::int64_t n, const LimitConfig& cfg) {
    TestResult r;
    r.experiment = experiment;
    r.statistic = statistic;
    r.value = std::abs(estimate / reference - 1.0);
    r.threshold = tolerance;
    r.n = n;
    r.replicas = cfg.replicas;
    r.seed = cfg.seed;
    r.note = "estimate " + num(estimate) + " reference " + num(reference);
    r.judge();
    return r;
}

}  // namespace

TestResult price_marginal_test(const ModelParams& params, std::int64_t n, double t, const LimitConfig& cfg,
                               double threshold) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    const auto draws = sample_marginals(params, n, {t}, {}, {}, cfg);
    const double ej = params.jumps.mean();
    const auto ref = ReferenceLaw::reflected_gaussian_abs(2.0 * params.lambda * ej * ej, t);
    return ks_against("price_marginal", "ks_distance", column(draws, &MarginalDraw::price, 0), ref, threshold, n,
                      cfg);
}

std::vector<TestResult> mass_marginal_test(const ModelParams& params, std::int64_t n, double t,
                                           const LimitConfig& cfg, double threshold, double mean_tolerance) {
    const auto draws = sample_marginals(params, n, {t}, {}, {}, cfg);
    const auto ref = ReferenceLaw::reflected_gaussian_abs(2.0 * params.lambda, t);
    auto sample = column(draws, &MarginalDraw::mass, 0);
    std::vector<TestResult> out;
    const double m = mean_of(sample);
    out.push_back(ks_against("mass_marginal", "ks_distance", std::move(sample), ref, threshold, n, cfg));
    if (ref.scale() > 0.0) {
        out.push_back(relative_check("mass_marginal", "mean_relative_error", m, ref.mean(), mean_tolerance, n, cfg));
    }
    return out;
}

std::vector<TestResult> ratio_test(const ModelParams& params, const std::vector<std::int64_t>& n_list, double t,
                                   const LimitConfig& cfg, double cap) {
    if (n_list.size() < 2 || !std::is_sorted(n_list.begin(), n_list.end()))
        throw std::invalid_argument("n_list must hold at least two increasing values");
    const double ej = params.jumps.mean();
    std::vector<TestResult> out;
    std::vector<double> dev;
    for (std::int64_t n : n_list) {
        const auto draws = sample_marginals(params, n, {t}, {}, {}, cfg);
        RunningStats s;
        std::size_t below = 0;
        for (const auto& d : draws) {
            s.add(std::abs(d.mass[0] - d.price[0] / ej));
            below += d.mass[0] + 1e-12 < d.price[0];
        }
        dev.push_back(s.mean());
        TestResult r;
        r.experiment = "ratio";
        r.statistic = "mean_abs_deviation_n=" + std::to_string(n);
        r.value = s.mean();
        r.threshold = std::numeric_limits<double>::infinity();
        r.n = n;
        r.replicas = cfg.replicas;
        r.seed = cfg.seed;
        r.note = "se " + num(s.std_error()) + "; replicas with mass < price: " + std::to_string(below);
        r.judge();
        out.push_back(std::move(r));
    }
    TestResult r;
    r.experiment = "ratio";
    r.statistic = "halving_ratio";
    if (dev.front() > 0.0)
        r.value = dev.back() / dev.front();
    else
        r.value = dev.back() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.threshold = 0.5;
    r.n = n_list.back();
    r.replicas = cfg.replicas;
    r.seed = cfg.seed;
    r.judge();
    r.pass = r.pass && dev.back() <= cap;
    r.note = "deviation at largest n " + num(dev.back()) + " cap " + num(cap);
    out.push_back(std::move(r));
    return out;
}

std::vector<TestResult> density_profile_test(const ModelParams& params, std::int64_t n, double t, double p0,
                                             const std::vector<double>& y_grid, const LimitConfig& cfg,
                                             double tolerance, std::size_t min_hits) {
    if (!(p0 > 0.0)) throw std::invalid_argument("p0 must be positive");
    for (double y : y_grid)
        if (!(y > 0.0) || y >= p0) throw std::invalid_argument("y values must lie in (0, p0)");
    const auto draws = sample_marginals(params, n, {t}, {}, y_grid, cfg);
    const double ej = params.jumps.mean();
    std::vector<RunningStats> ratio(y_grid.size());
    std::size_t hits = 0;
    for (const auto& d : draws) {
        if (!(d.price[0] > p0)) continue;
        ++hits;
        for (std::size_t k = 0; k < y_grid.size(); ++k) ratio[k].add(ej * d.mass_upto[0][k] / y_grid[k]);
    }
    std::vector<TestResult> out;
    for (std::size_t k = 0; k < y_grid.size(); ++k) {
        TestResult r;
        r.experiment = "density_profile";
        r.statistic = "abs_ratio_error_y=" + num(y_grid[k]);
        r.value = std::abs(ratio[k].mean() - 1.0);
        r.threshold = tolerance;
        r.n = n;
        r.replicas = cfg.replicas;
        r.seed = cfg.seed;
        r.sample_size = hits;
        r.inconclusive = hits < min_hits;
        r.note = "ratio " + num(ratio[k].mean()) + " se " + num(ratio[k].std_error()) + " hits " +
                 std::to_string(hits);
        r.judge();
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TestResult> local_time_tests(const ModelParams& params, std::int64_t n, double t,
                                         const std::vector<double>& eps_list, const LimitConfig& cfg,
                                         const LocalTimeThresholds& th) {
    if (!(t > 0.0)) throw std::invalid_argument("t must be positive");
    if (!std::is_sorted(eps_list.rbegin(), eps_list.rend()))
        throw std::invalid_argument("eps_list must be decreasing");
    const auto draws = sample_marginals(params, n, {t, 4.0 * t}, eps_list, {}, cfg);
    const double alpha = params.alpha();
    const double ej = params.jumps.mean();
    const auto make = [&](std::string statistic) {
        TestResult r;
        r.experiment = "local_time";
        r.statistic = std::move(statistic);
        r.n = n;
        r.replicas = cfg.replicas;
        r.seed = cfg.seed;
        r.sample_size = draws.size();
        return r;
    };

    std::vector<TestResult> out;
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        RunningStats gap;
        for (const auto& d : draws) gap.add(std::abs(d.l_price[0] - d.eps_occupation[0][k]));
        TestResult r = make("mean_abs_gap_eps=" + num(eps_list[k]));
        r.value = gap.mean();
        r.threshold = previous;
        r.note = "se " + num(gap.std_error());
        r.judge();
        previous = gap.mean();
        out.push_back(std::move(r));
    }

    const double l_price = mean_of(column(draws, &MarginalDraw::l_price, 0));
    const double l_mass = mean_of(column(draws, &MarginalDraw::l_mass, 0));
    const double l_price_4t = mean_of(column(draws, &MarginalDraw::l_price, 1));
    const auto levy_price = ReferenceLaw::levy_local_time(alpha * ej, t);
    const auto levy_mass = ReferenceLaw::levy_local_time(alpha, t);

    auto r1 = relative_check("local_time", "mean_L_price_vs_levy", l_price, levy_price.mean(), th.mean_relative, n,
                             cfg);
    out.push_back(std::move(r1));
    out.push_back(relative_check("local_time", "mean_L_price_vs_occupation_density", l_price,
                                 2.0 * levy_price.mean(), th.mean_relative, n, cfg));
    out.push_back(relative_check("local_time", "mean_L_mass_vs_levy", l_mass, levy_mass.mean(), th.mean_relative, n,
                                 cfg));
    out.push_back(relative_check("local_time", "mean_L_mass_vs_occupation_density", l_mass, 2.0 * levy_mass.mean(),
                                 th.mean_relative, n, cfg));

    TestResult ratio = make("ratio_L_mass_over_L_price");
    ratio.value = std::abs(l_mass / l_price - ej);
    ratio.threshold = th.ratio_abs;
    ratio.note = "ratio " + num(l_mass / l_price) + " target " + num(ej);
    ratio.judge();
    out.push_back(std::move(ratio));

    out.push_back(
        relative_check("local_time", "scaling_4t_over_t", l_price_4t / l_price, 2.0, th.scaling_relative, n, cfg));
    return out;
}

TestResult idle_fraction_test(const ModelParams& params, double horizon, const LimitConfig& cfg, double tolerance) {
    struct Acc {
        double ell = 0.0;
        double idle = 0.0;
        RunningStats per_path;
    };
    SimulateOptions opts;
    opts.record_events = false;
    const OrderBook empty;
    const auto acc = run_replicas<Acc>(
        cfg.replicas, cfg.seed, cfg.threads,
        [&](Stream& s, std::uint64_t, Acc& a) {
            const auto rec = simulate(params, empty, horizon, s, opts);
            a.ell += rec.ell;
            a.idle += rec.time_mass_zero;
            a.per_path.add(queue_q(rec).idle_fraction);
        },
        [](Acc& into, const Acc& from) {
            into.ell += from.ell;
            into.idle += from.idle;
            into.per_path.merge(from.per_path);
        });
    TestResult r;
    r.experiment = "idle_fraction";
    r.statistic = "abs_error_pooled";
    const double fraction = acc.idle / acc.ell;
    r.value = std::abs(fraction - params.jumps.mean());
    r.threshold = tolerance;
    r.replicas = cfg.replicas;
    r.seed = cfg.seed;
    r.sample_size = cfg.replicas;
    r.note = "pooled " + num(fraction) + " per-path sd " + num(acc.per_path.sd());
    r.judge();
    return r;
}

namespace {

void merge_excursions(ExcursionStats& into, ExcursionStats& from) {
    const auto append = [](std::vector<double>& a, std::vector<double>& b) { a.insert(a.end(), b.begin(), b.end()); };
    append(into.steps, from.steps);
    append(into.height, from.height);
    append(into.deposited, from.deposited);
    append(into.duration, from.duration);
    into.censored += from.censored;
}

}  // namespace

ExcursionStats ctmc_excursions(const ModelParams& params, Level a, std::int64_t step_cap, const LimitConfig& cfg) {
    if (step_cap < 1) throw std::invalid_argument("step cap must be >= 1");
    SimulateOptions opts;
    opts.record_events = false;
    opts.stop_after_first_excursion_above = a;
    opts.max_excursion_jumps = step_cap + 1;
    const OrderBook empty;
    return run_replicas<ExcursionStats>(
        cfg.replicas, cfg.seed, cfg.threads,
        [&](Stream& s, std::uint64_t, ExcursionStats& acc) {
            const auto rec = simulate(params, empty, std::numeric_limits<double>::infinity(), s, opts);
            const auto it = rec.excursions.find(a);
            if (it == rec.excursions.end() || it->second.empty() || !it->second.front().complete) {
                ++acc.censored;
                return;
            }
            const ExcursionRecord& e = it->second.front();
            acc.steps.push_back(static_cast<double>(e.jump_count - 1));
            acc.height.push_back(static_cast<double>(e.height));
            acc.deposited.push_back(static_cast<double>(e.deposited_below));
            acc.duration.push_back(e.duration());
        },
        merge_excursions);
}

ExcursionStats tree_excursions(const ModelParams& params, Level a, std::int64_t step_cap, const LimitConfig& cfg) {
    if (step_cap < 1) throw std::invalid_argument("step cap must be >= 1");
    return run_replicas<ExcursionStats>(
        cfg.replicas, cfg.seed, cfg.threads,
        [&](Stream& s, std::uint64_t, ExcursionStats& acc) {
            const NodeKey key{s()};
            const auto ex = exploration_to_book_path(a, key, params, s, step_cap);
            if (ex.capped) {
                ++acc.censored;
                return;
            }
            acc.steps.push_back(static_cast<double>(ex.tau));
            acc.height.push_back(static_cast<double>(ex.height));
            acc.deposited.push_back(static_cast<double>(ex.deposited_below));
            acc.duration.push_back(ex.duration);
        },
        merge_excursions);
}

namespace {

TestResult two_sample(const std::string& experiment, const std::string& statistic, std::vector<double> a,
                      std::vector<double> b, double alpha, const LimitConfig& cfg) {
    TestResult r;
    r.experiment = experiment;
    r.statistic = statistic;
    r.replicas = cfg.replicas;
    r.seed = cfg.seed;
    r.sample_size = a.size();
    r.sample_size_b = b.size();
    if (a.empty() || b.empty()) {
        r.inconclusive = true;
        r.note = "empty sample";
        r.judge();
        return r;
    }
    const auto ks = ks_two_sample(std::move(a), std::move(b));
    r.value = ks.p_value;
    r.p_value = ks.p_value;
    r.threshold = alpha;
    r.upper = false;
    r.note = "D " + num(ks.statistic);
    r.judge();
    return r;
}

}  // namespace

std::vector<TestResult> coupling_equivalence_test(const ModelParams& params, Level a, const LimitConfig& cfg,
                                                  std::int64_t step_cap, double alpha) {
    auto ctmc = ctmc_excursions(params, a, step_cap, cfg);
    LimitConfig tree_cfg = cfg;
    tree_cfg.seed = mix64(cfg.seed, 0x7472656573ULL);
    auto tree = tree_excursions(params, a, step_cap, tree_cfg);
    const std::string censored =
        "censored ctmc " + std::to_string(ctmc.censored) + " tree " + std::to_string(tree.censored);
    std::vector<TestResult> out;
    out.push_back(two_sample("coupling_equivalence", "ks_p_steps", std::move(ctmc.steps), std::move(tree.steps),
                             alpha, cfg));
    out.push_back(two_sample("coupling_equivalence", "ks_p_height", std::move(ctmc.height), std::move(tree.height),
                             alpha, cfg));
    out.push_back(two_sample("coupling_equivalence", "ks_p_deposited", std::move(ctmc.deposited),
                             std::move(tree.deposited), alpha, cfg));
    out.push_back(two_sample("coupling_equivalence", "ks_p_duration", std::move(ctmc.duration),
                             std::move(tree.duration), alpha, cfg));
    for (auto& r : out) r.note += "; " + censored;
    return out;
}

std::vector<TestResult> excursion_iid_test(const ModelParams& params, Level a, std::size_t min_excursions,
                                           const LimitConfig& cfg, std::uint64_t max_events, double alpha) {
    if (min_excursions < 4) throw std::invalid_argument("need at least 4 excursions");
    const std::string experiment = "excursion_iid_a=" + std::to_string(a);
    SimulateOptions opts;
    opts.record_events = false;
    opts.excursion_levels = {a};
    opts.stop_after_excursions = min_excursions;
    opts.max_events = max_events;
    Stream rng = seed_streams(cfg.seed, 0);
    const auto rec = simulate(params, OrderBook{}, std::numeric_limits<double>::infinity(), rng, opts);

    constexpr std::int64_t step_cap = 1'000'000;
    std::vector<double> steps;
    std::vector<double> heights;
    std::size_t over_cap = 0;
    for (const auto& e : rec.excursions.at(a)) {
        if (!e.complete) continue;
        steps.push_back(static_cast<double>(e.jump_count - 1));
        if (e.jump_count - 1 <= step_cap)
            heights.push_back(static_cast<double>(e.height));
        else
            ++over_cap;
    }
    const bool short_run = rec.truncated || steps.size() < min_excursions;
    const auto make = [&](std::string statistic) {
        TestResult r;
        r.experiment = experiment;
        r.statistic = std::move(statistic);
        r.replicas = 1;
        r.seed = cfg.seed;
        r.sample_size = steps.size();
        r.inconclusive = short_run;
        if (short_run) r.note = "horizon insufficient; ";
        return r;
    };
    std::vector<TestResult> out;
    const double band = steps.size() > 1 ? 1.96 / std::sqrt(static_cast<double>(steps.size() - 1)) : 0.0;

    TestResult corr = make("lag1_spearman_abs");
    if (steps.size() >= 3) {
        const std::span<const double> all(steps);
        corr.value = std::abs(spearman(all.first(all.size() - 1), all.subspan(1)));
    }
    corr.threshold = band;
    corr.judge();
    out.push_back(std::move(corr));

    TestResult split = make("split_half_ks_p_height");
    if (heights.size() >= 4) {
        const auto half = heights.size() / 2;
        const auto ks = ks_two_sample({heights.begin(), heights.begin() + static_cast<std::ptrdiff_t>(half)},
                                      {heights.begin() + static_cast<std::ptrdiff_t>(half), heights.end()});
        split.value = ks.p_value;
        split.p_value = ks.p_value;
        split.note += "D " + num(ks.statistic);
    }
    split.threshold = alpha;
    split.upper = false;
    split.judge();
    out.push_back(std::move(split));

    TestResult control = make("shuffled_lag1_spearman_abs");
    if (steps.size() >= 3) {
        std::vector<double> shuffled = steps;
        Stream shuffle_rng = seed_streams(cfg.seed, 1);
        std::shuffle(shuffled.begin(), shuffled.end(), shuffle_rng);
        const std::span<const double> all(shuffled);
        control.value = std::abs(spearman(all.first(all.size() - 1), all.subspan(1)));
    }
    control.threshold = band;
    control.judge();
    out.push_back(std::move(control));

    LimitConfig tree_cfg = cfg;
    tree_cfg.replicas = std::max<std::uint64_t>(heights.size(), 1);
    tree_cfg.seed = mix64(cfg.seed, 0x7472656573ULL);
    auto fresh = tree_excursions(params, a, step_cap, tree_cfg);
    TestResult vs_tree = two_sample(experiment, "ks_p_height_vs_trees", heights, std::move(fresh.height), alpha, cfg);
    vs_tree.inconclusive = vs_tree.inconclusive || short_run;
    vs_tree.judge();
    vs_tree.note += "; path excursions over step cap " + std::to_string(over_cap);
    out.push_back(std::move(vs_tree));
    return out;
}

}  // namespace lobtree
