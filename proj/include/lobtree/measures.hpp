#pragma once

// Finite point measures on the tick grid {0, 1, 2, ...}.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lobtree {

using Level = std::int64_t;

/// One-sided book: multiplicities per nonnegative level.
///
/// Stored densely (index = level) with trailing empty levels trimmed, so the
/// price is the last index. Books started empty keep every level in
/// [1, price] occupied, which makes removal at the price O(1); gaps are
/// allowed and handled by a downward scan.
class OrderBook {
public:
    OrderBook() = default;

    /// Builds a book from (level, count) pairs; counts must be positive and
    /// levels nonnegative. Repeated levels accumulate.
    static OrderBook from_pairs(std::span<const std::pair<Level, std::int64_t>> pairs);

    /// Parses the `level:count,level:count` form (empty string = empty book).
    static OrderBook parse(std::string_view text);

    /// Highest occupied level; 0 for the empty book.
    Level price() const noexcept {
        return counts_.empty() ? 0 : static_cast<Level>(counts_.size()) - 1;
    }
    std::int64_t mass() const noexcept { return mass_; }
    bool empty() const noexcept { return mass_ == 0; }

    /// Number of distinct occupied levels.
    std::int64_t support_size() const noexcept { return support_; }

    /// True when every level in [1, price] holds at least one order. Level 0
    /// may be empty: an order added to the empty book at displacement 1 sits
    /// at level 1.
    bool gap_free() const noexcept {
        const bool zero_empty = !counts_.empty() && counts_[0] == 0;
        return support_ + (zero_empty ? 1 : 0) == static_cast<std::int64_t>(counts_.size());
    }

    std::int64_t count(Level level) const noexcept {
        return level >= 0 && level < static_cast<Level>(counts_.size()) ? counts_[level] : 0;
    }

    /// Number of atoms at levels <= level.
    std::int64_t mass_at_or_below(Level level) const noexcept;

    /// Adds one order at max(price + j, 0) and returns that level.
    Level add_order(std::int64_t displacement);

    /// Adds one order at an explicit level (>= 0).
    void add_at(Level level);

    /// Removes one order at the price. Throws std::logic_error on an empty book.
    void remove_at_price();

    /// Visits occupied levels in increasing order.
    void for_each(const std::function<void(Level, std::int64_t)>& fn) const;

    /// Dense counts, index = level, trailing zeros trimmed.
    std::span<const std::int64_t> dense() const noexcept { return counts_; }

    std::string to_string() const;

    bool operator==(const OrderBook& other) const noexcept = default;

private:
    std::vector<std::int64_t> counts_;
    std::int64_t mass_ = 0;
    std::int64_t support_ = 0;
};

/// Value-returning forms of the book operations.
Level price(const OrderBook& book) noexcept;
OrderBook add_order(OrderBook book, std::int64_t displacement);
OrderBook remove_at_price(OrderBook book);

/// Level-shift: keeps atoms at levels k >= a and moves them to k - a.
OrderBook shift_above(const OrderBook& book, Level a);

/// Lazy view of a book under the space/mass scaling by n: an atom at level k
/// has mass 1/n at position k/n. Holds a reference; the book must outlive it.
class ScaledMeasure {
public:
    ScaledMeasure(const OrderBook& base, std::int64_t n);

    std::int64_t n() const noexcept { return n_; }
    const OrderBook& base() const noexcept { return base_.get(); }

    double price() const noexcept;
    double mass() const noexcept;

    /// Measure of [y, inf).
    double mass_from(double y) const;
    /// Measure of [0, y].
    double mass_upto(double y) const;

    /// (position, mass) of each occupied level.
    std::vector<std::pair<double, double>> atoms() const;

private:
    std::reference_wrapper<const OrderBook> base_;
    std::int64_t n_;
};

ScaledMeasure scale(const OrderBook& book, std::int64_t n);

/// Law of the displacement J on {-j*, ..., 0, 1}.
class JumpDistribution {
public:
    /// Validates: finite nonnegative probabilities summing to 1 (1e-12),
    /// support within {.., 0, 1}, P(J=1) > 0, E(J) > 0. Throws
    /// std::invalid_argument otherwise.
    explicit JumpDistribution(std::map<std::int64_t, double> pmf);

    /// Parses `-1:0.3,1:0.7`.
    static JumpDistribution parse(std::string_view text);

    double mean() const noexcept { return mean_; }
    double p1() const noexcept { return p1_; }
    std::int64_t j_star() const noexcept { return j_star_; }
    const std::map<std::int64_t, double>& pmf() const noexcept { return pmf_; }
    double prob(std::int64_t j) const noexcept;

    /// Inverse-CDF draw from a uniform in [0, 1).
    std::int64_t sample(double u) const noexcept;

    /// E exp(-k J).
    double laplace(double k) const noexcept;

    std::string to_string() const;

private:
    std::map<std::int64_t, double> pmf_;
    std::vector<std::int64_t> values_;
    std::vector<double> cdf_;
    double mean_ = 0.0;
    double p1_ = 0.0;
    std::int64_t j_star_ = 0;
};

}  // namespace lobtree
