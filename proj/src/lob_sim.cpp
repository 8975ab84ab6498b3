#include "lobtree/lob_sim.hpp"

#include <algorithm>
#include <stdexcept>

namespace lobtree {
namespace {

struct Accumulators {
    double ell = 0.0;
    double time_mass_zero = 0.0;
    std::vector<double> occupation;

    void add(const OrderBook& book, std::span<const Level> levels, double dt) {
        const Level p = book.price();
        if (p == 0) ell += dt;
        if (book.empty()) time_mass_zero += dt;
        for (std::size_t i = 0; i < levels.size(); ++i)
            if (p <= levels[i]) occupation[i] += dt;
    }
};

Observation snapshot(double time, const OrderBook& book, const Accumulators& acc, bool with_book) {
    Observation obs;
    obs.time = time;
    obs.price = book.price();
    obs.mass = book.mass();
    obs.ell = acc.ell;
    obs.time_mass_zero = acc.time_mass_zero;
    obs.occupation = acc.occupation;
    if (with_book) obs.book = book;
    return obs;
}

void apply(OrderBook& book, const Event& e) {
    if (e.kind == EventKind::add)
        book.add_at(e.level);
    else
        book.remove_at_price();
}

}  // namespace

ModelParams::ModelParams(double lambda_, JumpDistribution jumps_)
    : lambda(lambda_), jumps(std::move(jumps_)) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
}

ExcursionTracker::ExcursionTracker(Level a, Level initial_price, bool record_path)
    : a_(a), price_(initial_price), record_path_(record_path) {
    if (a < 0) throw std::invalid_argument("excursion level must be nonnegative");
}

void ExcursionTracker::on_event(const Event& e) {
    const Level before = price_;
    price_ = e.price_after;
    if (!open_) {
        if (before <= a_ && e.price_after > a_) {
            ExcursionRecord rec;
            rec.a = a_;
            rec.g = e.time;
            rec.jump_count = 1;
            rec.height = e.price_after - a_;
            if (record_path_) rec.embedded_path.push_back({e.kind, e.level});
            open_ = std::move(rec);
        }
        return;
    }
    ExcursionRecord& rec = *open_;
    ++rec.jump_count;
    if (record_path_) rec.embedded_path.push_back({e.kind, e.level});
    if (e.kind == EventKind::add && e.level <= a_) ++rec.deposited_below;
    rec.height = std::max(rec.height, e.price_after - a_);
    if (e.price_after <= a_) {
        rec.d = e.time;
        rec.complete = true;
        records_.push_back(std::move(rec));
        open_.reset();
        ++completed_;
    }
}

void ExcursionTracker::finish(double end_time) {
    if (!open_) return;
    open_->d = end_time;
    open_->complete = false;
    records_.push_back(std::move(*open_));
    open_.reset();
}

PathRecord simulate(const ModelParams& params, const OrderBook& initial, double horizon, Stream& rng,
                    const SimulateOptions& options) {
    if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be nonnegative");
    if (std::isinf(horizon) && !options.stop_after_first_excursion_above && !options.stop_after_excursions &&
        options.max_events == 0)
        throw std::invalid_argument("infinite horizon needs a stop rule");
    if (!std::is_sorted(options.observe_times.begin(), options.observe_times.end()))
        throw std::invalid_argument("observe_times must be increasing");
    if (options.stop_after_excursions && options.excursion_levels.empty())
        throw std::invalid_argument("stop_after_excursions needs an excursion level");

    PathRecord rec;
    rec.initial = initial;
    rec.events_recorded = options.record_events;
    rec.occupation_levels = options.occupation_levels;

    OrderBook book = initial;
    Accumulators acc;
    acc.occupation.assign(options.occupation_levels.size(), 0.0);

    std::vector<ExcursionTracker> trackers;
    for (Level a : options.excursion_levels)
        trackers.emplace_back(a, book.price(), options.record_excursion_paths);
    std::size_t stop_tracker = trackers.size();
    if (options.stop_after_first_excursion_above) {
        const Level a = *options.stop_after_first_excursion_above;
        auto it = std::find(options.excursion_levels.begin(), options.excursion_levels.end(), a);
        if (it == options.excursion_levels.end()) {
            trackers.emplace_back(a, book.price(), options.record_excursion_paths);
            stop_tracker = trackers.size() - 1;
        } else {
            stop_tracker = static_cast<std::size_t>(it - options.excursion_levels.begin());
        }
    }
    const bool check = options.check_invariants;
    if (check && !book.empty() && !book.gap_free())
        throw std::invalid_argument("invariant checks need a gap-free initial book");

    const double lambda = params.lambda;
    const JumpDistribution& jumps = params.jumps;
    const std::int64_t j_star = jumps.j_star();
    const std::span<const Level> occ_levels(options.occupation_levels);
    std::size_t next_obs = 0;
    double t = 0.0;

    for (;;) {
        const bool nonempty = !book.empty();
        const double next = t + rng.exponential(nonempty ? 2.0 * lambda : lambda);
        while (next_obs < options.observe_times.size() && options.observe_times[next_obs] < next &&
               options.observe_times[next_obs] <= horizon) {
            const double s = std::max(options.observe_times[next_obs], t);
            Accumulators partial = acc;
            partial.add(book, occ_levels, s - t);
            rec.observations.push_back(snapshot(s, book, partial, options.observe_books));
            ++next_obs;
        }
        if (next > horizon) {
            acc.add(book, occ_levels, horizon - t);
            t = horizon;
            break;
        }
        acc.add(book, occ_levels, next - t);
        t = next;

        Event e;
        e.time = t;
        if (!nonempty || rng.coin()) {
            e.kind = EventKind::add;
            e.level = book.add_order(jumps.sample(rng.uniform()));
        } else {
            e.kind = EventKind::remove;
            e.level = book.price();
            book.remove_at_price();
        }
        e.price_after = book.price();
        e.mass_after = book.mass();
        ++rec.event_count;
        if (options.record_events) rec.events.push_back(e);

        if (check) {
            if (!book.empty() && !book.gap_free())
                throw std::logic_error("book has an empty level below the price");
            for (const auto& tr : trackers) {
                if (!tr.in_excursion()) continue;
                // Inside an excursion above a, nothing below a + 1 - j* moves
                // and nothing at or below a is removed.
                if (e.kind == EventKind::remove && e.level <= tr.level())
                    throw std::logic_error("removal below an open excursion level");
                if (e.kind == EventKind::add && e.level < tr.level() + 1 - j_star && e.level > 0)
                    throw std::logic_error("order added below the local-evolution window");
            }
        }
        for (auto& tr : trackers) tr.on_event(e);

        if (stop_tracker < trackers.size()) {
            const auto& tr = trackers[stop_tracker];
            if (tr.completed() >= 1) break;
            if (options.max_excursion_jumps != 0 && tr.open_jump_count() > options.max_excursion_jumps) {
                rec.truncated = true;
                break;
            }
        }
        if (options.stop_after_excursions && trackers.front().completed() >= *options.stop_after_excursions)
            break;
        if (options.max_events != 0 && rec.event_count >= options.max_events) {
            rec.truncated = true;
            break;
        }
    }

    rec.horizon = t;
    rec.final_book = std::move(book);
    rec.ell = acc.ell;
    rec.time_mass_zero = acc.time_mass_zero;
    rec.occupation = std::move(acc.occupation);
    for (auto& tr : trackers) {
        tr.finish(t);
        auto& dst = rec.excursions[tr.level()];
        if (dst.empty()) dst = std::move(tr.records());
    }
    return rec;
}

RescaledObservables rescale(const Observation& obs, std::int64_t n) {
    const auto nd = static_cast<double>(n);
    RescaledObservables out;
    out.price = static_cast<double>(obs.price) / nd;
    out.mass = static_cast<double>(obs.mass) / nd;
    out.local_time_price = obs.ell / nd;
    out.local_time_mass = obs.time_mass_zero / nd;
    out.ell = obs.ell;
    return out;
}

RescaledObservables rescaled_observables(const PathRecord& path, std::int64_t n, double t) {
    if (n < 1) throw std::invalid_argument("scaling index must be >= 1");
    if (t < 0) throw std::invalid_argument("time must be nonnegative");
    const double target = static_cast<double>(n) * static_cast<double>(n) * t;
    const double slack = 1e-9 * std::max(1.0, target);
    if (target > path.horizon + slack) throw std::invalid_argument("path horizon shorter than n^2 t");

    if (path.events_recorded) {
        OrderBook book = path.initial;
        Accumulators acc;
        double now = 0.0;
        for (const Event& e : path.events) {
            if (e.time > target) break;
            acc.add(book, {}, e.time - now);
            now = e.time;
            apply(book, e);
        }
        acc.add(book, {}, target - now);
        return rescale(snapshot(target, book, acc, false), n);
    }
    for (const Observation& obs : path.observations)
        if (std::abs(obs.time - target) <= slack) return rescale(obs, n);
    throw std::invalid_argument("no recorded events or observation at n^2 t");
}

std::vector<ExcursionRecord> extract_excursions(const PathRecord& path, Level a, bool record_paths) {
    if (!path.events_recorded) throw std::invalid_argument("extract_excursions needs recorded events");
    ExcursionTracker tracker(a, path.initial.price(), record_paths);
    for (const Event& e : path.events) tracker.on_event(e);
    tracker.finish(path.horizon);
    return std::move(tracker.records());
}

QueueResult queue_q(const PathRecord& path) {
    if (!(path.ell > 0.0)) throw std::domain_error("price never sat at 0; Q is undefined");
    QueueResult out;
    out.idle_fraction = path.time_mass_zero / path.ell;
    if (!path.events_recorded) return out;

    Level price = path.initial.price();
    double clock = 0.0;
    double last = 0.0;
    if (price == 0) out.q_path.emplace_back(0.0, path.initial.mass());
    for (const Event& e : path.events) {
        if (price == 0) clock += e.time - last;
        last = e.time;
        price = e.price_after;
        if (price == 0) out.q_path.emplace_back(clock, e.mass_after);
    }
    return out;
}

double epsilon_occupation(const PathRecord& path, std::int64_t n, double t, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (n < 1) throw std::invalid_argument("scaling index must be >= 1");
    const auto nd = static_cast<double>(n);
    const double target = nd * nd * t;
    const double slack = 1e-9 * std::max(1.0, target);
    if (target > path.horizon + slack) throw std::invalid_argument("path horizon shorter than n^2 t");
    const auto threshold = static_cast<Level>(std::floor(eps * nd + 1e-9));

    double occupied = 0.0;
    if (path.events_recorded) {
        Level price = path.initial.price();
        double now = 0.0;
        for (const Event& e : path.events) {
            if (e.time > target) break;
            if (price <= threshold) occupied += e.time - now;
            now = e.time;
            price = e.price_after;
        }
        if (price <= threshold) occupied += target - now;
    } else {
        auto lvl = std::find(path.occupation_levels.begin(), path.occupation_levels.end(), threshold);
        if (lvl == path.occupation_levels.end())
            throw std::invalid_argument("no recorded events or occupation accumulator for eps");
        const auto idx = static_cast<std::size_t>(lvl - path.occupation_levels.begin());
        const Observation* hit = nullptr;
        for (const Observation& obs : path.observations)
            if (std::abs(obs.time - target) <= slack) hit = &obs;
        if (hit)
            occupied = hit->occupation[idx];
        else if (std::abs(path.horizon - target) <= slack)
            occupied = path.occupation[idx];
        else
            throw std::invalid_argument("no observation at n^2 t");
    }
    return occupied / (nd * nd) / eps;
}

PricePath::PricePath(std::vector<std::pair<double, Level>> steps, double end)
    : steps_(std::move(steps)), end_(end) {
    if (steps_.empty()) throw std::invalid_argument("price path needs an initial value");
}

PricePath PricePath::from_record(const PathRecord& path) {
    if (!path.events_recorded) throw std::invalid_argument("price path needs recorded events");
    std::vector<std::pair<double, Level>> steps{{0.0, path.initial.price()}};
    for (const Event& e : path.events)
        if (e.price_after != steps.back().second) steps.emplace_back(e.time, e.price_after);
    return PricePath(std::move(steps), path.horizon);
}

Level PricePath::at(double t) const {
    auto it = std::upper_bound(steps_.begin(), steps_.end(), t,
                               [](double v, const auto& s) { return v < s.first; });
    if (it == steps_.begin()) return steps_.front().second;
    return std::prev(it)->second;
}

PricePath PricePath::shifted(double t) const {
    std::vector<std::pair<double, Level>> out{{0.0, at(t)}};
    for (const auto& [time, value] : steps_)
        if (time > t && value != out.back().second) out.emplace_back(time - t, value);
    return PricePath(std::move(out), std::max(0.0, end_ - t));
}

PricePath PricePath::stopped(double t) const {
    std::vector<std::pair<double, Level>> out;
    for (const auto& s : steps_)
        if (s.first <= t) out.push_back(s);
    if (out.empty()) out.push_back(steps_.front());
    return PricePath(std::move(out), end_);
}

std::optional<double> PricePath::first_at_or_below(double t, Level level) const {
    if (t <= end_ && at(t) <= level) return t;
    for (const auto& [time, value] : steps_)
        if (time > t && time <= end_ && value <= level) return time;
    return std::nullopt;
}

std::optional<double> PricePath::first_at_or_above(double t, Level level) const {
    if (t <= end_ && at(t) >= level) return t;
    for (const auto& [time, value] : steps_)
        if (time > t && time <= end_ && value >= level) return time;
    return std::nullopt;
}

std::optional<double> PricePath::first_at(double t, Level level) const {
    if (t <= end_ && at(t) == level) return t;
    for (const auto& [time, value] : steps_)
        if (time > t && time <= end_ && value == level) return time;
    return std::nullopt;
}

std::optional<double> PricePath::last_at(double t, Level level) const {
    if (at(t) == level) return t;
    std::optional<double> out;
    for (std::size_t k = 0; k + 1 < steps_.size() && steps_[k + 1].first <= t; ++k)
        if (steps_[k].second == level) out = steps_[k + 1].first;
    return out;
}

std::pair<PricePath, PricePath> path_shift_stop(const PathRecord& path, double t) {
    if (t > path.horizon) throw std::invalid_argument("shift time beyond horizon");
    const PricePath full = PricePath::from_record(path);
    return {full.shifted(t), full.stopped(t)};
}

std::optional<double> HittingTimes::D(const PricePath& p, double t) { return p.first_at_or_below(t, 0); }
std::optional<double> HittingTimes::G(const PricePath& p, double t) { return p.last_at(t, 0); }
std::optional<double> HittingTimes::D_eps(const PricePath& p, double t, Level level) {
    return p.first_at_or_below(t, level);
}
std::optional<double> HittingTimes::T(const PricePath& p, Level b) { return p.first_at_or_above(0.0, b); }

std::optional<double> HittingTimes::g(const PricePath& p, Level a, Level b) {
    auto tb = T(p, b);
    if (!tb) return std::nullopt;
    return p.last_at(*tb, a);
}

std::optional<double> HittingTimes::d(const PricePath& p, Level a, Level b) {
    auto tb = T(p, b);
    if (!tb) return std::nullopt;
    return p.first_at_or_below(*tb, a);
}

std::optional<double> HittingTimes::U(const PricePath& p, Level a, Level b) {
    auto lo = g(p, a, b);
    auto hi = d(p, a, b);
    if (!lo || !hi) return std::nullopt;
    return *hi - *lo;
}

}  // namespace lobtree
