#pragma once

// Event-driven simulation of the one-sided order-book chain.
//
// Orders arrive at rate lambda at (price + J)^+ and, while the book is
// nonempty, an order at the price leaves at rate lambda. The simulation uses
// the embedded chain: Exp(2 lambda) holding times and a fair add/remove coin
// when nonempty, Exp(lambda) holding times and a forced add when empty.
// Occupation times are accumulated from the exact holding times.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "lobtree/measures.hpp"
#include "lobtree/rng.hpp"

namespace lobtree {

struct ModelParams {
    double lambda = 1.0;
    JumpDistribution jumps;

    ModelParams(double lambda_, JumpDistribution jumps_);

    double alpha() const noexcept { return std::sqrt(2.0 * lambda); }
    /// Rate in the upper large-deviation bound for the exploration time.
    double mu_bar() const noexcept { return (1.0 - std::log(2.0)) * lambda; }
    /// Rate in the lower large-deviation bound for the exploration time.
    double mu_under() const noexcept { return (2.0 * std::log(2.0) - 1.0) * lambda; }
};

enum class EventKind : std::uint8_t { add, remove };

struct Event {
    double time = 0.0;
    EventKind kind = EventKind::add;
    Level level = 0;  ///< level where the order was added or removed
    Level price_after = 0;
    std::int64_t mass_after = 0;
};

/// One book change at a jump epoch, in absolute levels.
struct BookDelta {
    EventKind kind = EventKind::add;
    Level level = 0;
    bool operator==(const BookDelta&) const = default;
};

/// An excursion of the price above level a: price <= a just before g and at
/// d, price > a on [g, d). jump_count includes the opening add at g.
struct ExcursionRecord {
    Level a = 0;
    double g = 0.0;
    double d = 0.0;
    std::int64_t jump_count = 0;
    Level height = 0;
    std::int64_t deposited_below = 0;
    bool complete = false;
    std::vector<BookDelta> embedded_path;

    double duration() const noexcept { return d - g; }
};

/// Online excursion extraction for a single level; shared by the simulator
/// and by replays of recorded paths.
class ExcursionTracker {
public:
    ExcursionTracker(Level a, Level initial_price, bool record_path = false);

    void on_event(const Event& event);
    /// Flags a still-open excursion as incomplete and appends it.
    void finish(double end_time);

    Level level() const noexcept { return a_; }
    bool in_excursion() const noexcept { return open_.has_value(); }
    /// Jumps of the open excursion so far (0 when none is open).
    std::int64_t open_jump_count() const noexcept { return open_ ? open_->jump_count : 0; }
    std::size_t completed() const noexcept { return completed_; }
    std::vector<ExcursionRecord>& records() noexcept { return records_; }
    const std::vector<ExcursionRecord>& records() const noexcept { return records_; }

private:
    Level a_;
    Level price_;
    bool record_path_;
    std::optional<ExcursionRecord> open_;
    std::vector<ExcursionRecord> records_;
    std::size_t completed_ = 0;
};

/// State and accumulators at a requested time.
struct Observation {
    double time = 0.0;
    Level price = 0;
    std::int64_t mass = 0;
    double ell = 0.0;             ///< time with price = 0 on [0, time]
    double time_mass_zero = 0.0;  ///< time with mass = 0 on [0, time]
    std::vector<double> occupation;  ///< time with price <= occupation_levels[i]
    std::optional<OrderBook> book;
};

struct SimulateOptions {
    bool record_events = true;
    /// Increasing times at which to snapshot state and accumulators.
    std::vector<double> observe_times;
    bool observe_books = false;
    /// Price thresholds for occupation-time accumulators.
    std::vector<Level> occupation_levels;
    /// Levels whose excursions are tracked online.
    std::vector<Level> excursion_levels;
    bool record_excursion_paths = false;
    /// Stop once the first excursion above this level has closed.
    std::optional<Level> stop_after_first_excursion_above;
    /// Stop once this many excursions above excursion_levels[0] have closed.
    std::optional<std::size_t> stop_after_excursions;
    /// With a stop_after_first_excursion_above rule: give up once the open
    /// excursion has more than this many jumps (0 = unlimited). The record is
    /// then flagged truncated and the excursion returned incomplete.
    std::int64_t max_excursion_jumps = 0;
    /// Hard cap on the number of events; 0 = unlimited.
    std::uint64_t max_events = 0;
    /// Assert the gap-free and local-evolution properties on every event
    /// (valid when the initial book is gap-free).
    bool check_invariants = false;
};

struct PathRecord {
    OrderBook initial;
    OrderBook final_book;
    double horizon = 0.0;  ///< end of the simulated window
    std::int64_t n = 1;
    std::vector<Event> events;
    bool events_recorded = false;
    std::uint64_t event_count = 0;
    bool truncated = false;  ///< stopped by max_events
    double ell = 0.0;
    double time_mass_zero = 0.0;
    std::vector<Level> occupation_levels;
    std::vector<double> occupation;
    std::vector<Observation> observations;
    std::map<Level, std::vector<ExcursionRecord>> excursions;
};

/// Simulates on [0, horizon] (horizon may be +inf when a stop rule is set).
PathRecord simulate(const ModelParams& params, const OrderBook& initial, double horizon,
                    Stream& rng, const SimulateOptions& options = {});

struct RescaledObservables {
    double price = 0.0;
    double mass = 0.0;
    double local_time_price = 0.0;  ///< n * Leb{u <= t : price^n_u = 0}
    double local_time_mass = 0.0;   ///< n * Leb{u <= t : mass^n_u = 0}
    double ell = 0.0;               ///< raw time with price 0 on [0, n^2 t]
};

/// Observables of the rescaled process at time t. Needs recorded events or an
/// observation at n^2 t; throws std::invalid_argument if the path is too short.
RescaledObservables rescaled_observables(const PathRecord& path, std::int64_t n, double t);

/// Rescaling of a raw observation.
RescaledObservables rescale(const Observation& obs, std::int64_t n);

/// Replays recorded events and returns all excursions above a, in order; a
/// trailing open excursion is returned flagged incomplete.
std::vector<ExcursionRecord> extract_excursions(const PathRecord& path, Level a,
                                                bool record_paths = false);

struct QueueResult {
    double idle_fraction = 0.0;
    /// (local-time clock, mass) at each change of Q.
    std::vector<std::pair<double, std::int64_t>> q_path;
};

/// The mass process read only while the price sits at 0, time-changed by the
/// inverse of ell. Throws std::domain_error if the price never sits at 0.
QueueResult queue_q(const PathRecord& path);

/// (1/eps) * Leb{u <= t : price^n_u <= eps}, exactly from holding times.
double epsilon_occupation(const PathRecord& path, std::int64_t n, double t, double eps);

/// Right-continuous step function of the price.
class PricePath {
public:
    PricePath() = default;
    PricePath(std::vector<std::pair<double, Level>> steps, double end);

    static PricePath from_record(const PathRecord& path);

    double start() const noexcept { return steps_.empty() ? 0.0 : steps_.front().first; }
    double end() const noexcept { return end_; }
    const std::vector<std::pair<double, Level>>& steps() const noexcept { return steps_; }

    Level at(double t) const;

    /// Shift: s -> price(t + s), relabelled to start at 0.
    PricePath shifted(double t) const;
    /// Stop: s -> price(min(s, t)), kept on the same window.
    PricePath stopped(double t) const;

    /// inf{s >= t : price <= level}.
    std::optional<double> first_at_or_below(double t, Level level) const;
    /// sup{s <= t : price = level}.
    std::optional<double> last_at(double t, Level level) const;
    /// inf{s >= t : price >= level}.
    std::optional<double> first_at_or_above(double t, Level level) const;
    /// inf{s >= t : price = level}.
    std::optional<double> first_at(double t, Level level) const;

private:
    std::vector<std::pair<double, Level>> steps_;
    double end_ = 0.0;
};

std::pair<PricePath, PricePath> path_shift_stop(const PathRecord& path, double t);

/// Hitting times of the price path (scanning).
struct HittingTimes {
    /// Right end of the excursion from 0 straddling t.
    static std::optional<double> D(const PricePath& p, double t);
    /// Left end of the excursion from 0 straddling t.
    static std::optional<double> G(const PricePath& p, double t);
    /// First time after t with price <= level.
    static std::optional<double> D_eps(const PricePath& p, double t, Level level);
    /// First time with price >= b.
    static std::optional<double> T(const PricePath& p, Level b);
    /// Endpoints and length of the first excursion above a reaching b.
    static std::optional<double> g(const PricePath& p, Level a, Level b);
    static std::optional<double> d(const PricePath& p, Level a, Level b);
    static std::optional<double> U(const PricePath& p, Level a, Level b);
};

}  // namespace lobtree
