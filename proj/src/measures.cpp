#include "lobtree/measures.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lobtree {
namespace {

// Dense storage bound; reaching it means a runaway configuration.
constexpr Level kMaxLevel = Level{1} << 34;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what) {
    s = trim(s);
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
        // from_chars for double is available but strtod handles "1e-3" and "+"
        // consistently across library versions.
        std::string buf(s);
        char* end = nullptr;
        value = std::strtod(buf.c_str(), &end);
        if (buf.empty() || end != buf.c_str() + buf.size())
            throw std::invalid_argument("bad " + std::string(what) + ": '" + buf + "'");
    } else {
        if (!s.empty() && s.front() == '+') s.remove_prefix(1);
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            throw std::invalid_argument("bad " + std::string(what) + ": '" + std::string(s) + "'");
    }
    return value;
}

// Splits "a:b,c:d" into pairs of string views.
std::vector<std::pair<std::string_view, std::string_view>> split_pairs(std::string_view text) {
    std::vector<std::pair<std::string_view, std::string_view>> out;
    text = trim(text);
    if (text.empty()) return out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto comma = text.find(',', start);
        auto item = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
        auto colon = item.find(':');
        if (colon == std::string_view::npos)
            throw std::invalid_argument("expected 'key:value', got '" + std::string(item) + "'");
        out.emplace_back(item.substr(0, colon), item.substr(colon + 1));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

OrderBook OrderBook::from_pairs(std::span<const std::pair<Level, std::int64_t>> pairs) {
    OrderBook book;
    for (auto [level, count] : pairs) {
        if (level < 0) throw std::invalid_argument("negative level in book");
        if (count <= 0) throw std::invalid_argument("nonpositive multiplicity in book");
        for (std::int64_t i = 0; i < count; ++i) book.add_at(level);
    }
    return book;
}

OrderBook OrderBook::parse(std::string_view text) {
    std::vector<std::pair<Level, std::int64_t>> pairs;
    for (auto [k, v] : split_pairs(text))
        pairs.emplace_back(parse_number<Level>(k, "level"), parse_number<std::int64_t>(v, "count"));
    return from_pairs(pairs);
}

std::int64_t OrderBook::mass_at_or_below(Level level) const noexcept {
    if (level < 0) return 0;
    if (level >= static_cast<Level>(counts_.size())) return mass_;
    return std::accumulate(counts_.begin(), counts_.begin() + level + 1, std::int64_t{0});
}

Level OrderBook::add_order(std::int64_t displacement) {
    const Level level = std::max<Level>(price() + displacement, 0);
    add_at(level);
    return level;
}

void OrderBook::add_at(Level level) {
    if (level < 0) throw std::invalid_argument("order level must be nonnegative");
    if (level >= kMaxLevel) throw std::length_error("order level exceeds supported range");
    if (level >= static_cast<Level>(counts_.size())) counts_.resize(static_cast<std::size_t>(level) + 1, 0);
    if (counts_[level]++ == 0) ++support_;
    ++mass_;
}

void OrderBook::remove_at_price() {
    if (mass_ == 0) throw std::logic_error("remove_at_price on an empty book");
    if (--counts_.back() == 0) --support_;
    --mass_;
    while (!counts_.empty() && counts_.back() == 0) counts_.pop_back();
}

void OrderBook::for_each(const std::function<void(Level, std::int64_t)>& fn) const {
    for (std::size_t k = 0; k < counts_.size(); ++k)
        if (counts_[k] > 0) fn(static_cast<Level>(k), counts_[k]);
}

std::string OrderBook::to_string() const {
    std::ostringstream os;
    bool first = true;
    for_each([&](Level level, std::int64_t count) {
        if (!first) os << ',';
        first = false;
        os << level << ':' << count;
    });
    return os.str();
}

Level price(const OrderBook& book) noexcept { return book.price(); }

OrderBook add_order(OrderBook book, std::int64_t displacement) {
    book.add_order(displacement);
    return book;
}

OrderBook remove_at_price(OrderBook book) {
    book.remove_at_price();
    return book;
}

OrderBook shift_above(const OrderBook& book, Level a) {
    if (a < 0) throw std::invalid_argument("shift level must be nonnegative");
    std::vector<std::pair<Level, std::int64_t>> pairs;
    book.for_each([&](Level level, std::int64_t count) {
        if (level >= a) pairs.emplace_back(level - a, count);
    });
    return OrderBook::from_pairs(pairs);
}

ScaledMeasure::ScaledMeasure(const OrderBook& base, std::int64_t n) : base_(base), n_(n) {
    if (n < 1) throw std::invalid_argument("scaling index must be >= 1");
}

double ScaledMeasure::price() const noexcept {
    return static_cast<double>(base().price()) / static_cast<double>(n_);
}

double ScaledMeasure::mass() const noexcept {
    return static_cast<double>(base().mass()) / static_cast<double>(n_);
}

double ScaledMeasure::mass_from(double y) const {
    const double threshold = static_cast<double>(n_) * y;
    std::int64_t total = 0;
    base().for_each([&](Level level, std::int64_t count) {
        if (static_cast<double>(level) >= threshold) total += count;
    });
    return static_cast<double>(total) / static_cast<double>(n_);
}

double ScaledMeasure::mass_upto(double y) const {
    if (y < 0) return 0.0;
    const auto top = static_cast<Level>(std::floor(static_cast<double>(n_) * y));
    return static_cast<double>(base().mass_at_or_below(top)) / static_cast<double>(n_);
}

std::vector<std::pair<double, double>> ScaledMeasure::atoms() const {
    std::vector<std::pair<double, double>> out;
    const auto n = static_cast<double>(n_);
    base().for_each([&](Level level, std::int64_t count) {
        out.emplace_back(static_cast<double>(level) / n, static_cast<double>(count) / n);
    });
    return out;
}

ScaledMeasure scale(const OrderBook& book, std::int64_t n) { return ScaledMeasure(book, n); }

JumpDistribution::JumpDistribution(std::map<std::int64_t, double> pmf) : pmf_(std::move(pmf)) {
    double total = 0.0;
    for (auto it = pmf_.begin(); it != pmf_.end();) {
        if (it->first > 1) throw std::invalid_argument("displacements must be <= 1");
        if (!std::isfinite(it->second) || it->second < 0)
            throw std::invalid_argument("probabilities must be finite and nonnegative");
        if (it->second == 0.0) {
            it = pmf_.erase(it);
            continue;
        }
        total += it->second;
        ++it;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("probabilities must sum to 1");
    if (pmf_.empty() || prob(1) <= 0.0) throw std::invalid_argument("P(J=1) must be positive");

    double acc = 0.0;
    for (auto [j, p] : pmf_) {
        mean_ += static_cast<double>(j) * p;
        acc += p;
        values_.push_back(j);
        cdf_.push_back(acc);
    }
    cdf_.back() = 1.0;
    p1_ = prob(1);
    j_star_ = std::max<std::int64_t>(1, -pmf_.begin()->first);
    if (mean_ <= 0.0) throw std::invalid_argument("E(J) must be positive");
}

JumpDistribution JumpDistribution::parse(std::string_view text) {
    std::map<std::int64_t, double> pmf;
    for (auto [k, v] : split_pairs(text))
        pmf[parse_number<std::int64_t>(k, "displacement")] += parse_number<double>(v, "probability");
    if (pmf.empty()) throw std::invalid_argument("empty jump pmf");
    return JumpDistribution(std::move(pmf));
}

double JumpDistribution::prob(std::int64_t j) const noexcept {
    auto it = pmf_.find(j);
    return it == pmf_.end() ? 0.0 : it->second;
}

std::int64_t JumpDistribution::sample(double u) const noexcept {
    // Supports are tiny; a linear scan beats binary search here.
    for (std::size_t i = 0; i + 1 < cdf_.size(); ++i)
        if (u < cdf_[i]) return values_[i];
    return values_.back();
}

double JumpDistribution::laplace(double k) const noexcept {
    double s = 0.0;
    for (auto [j, p] : pmf_) s += p * std::exp(-k * static_cast<double>(j));
    return s;
}

std::string JumpDistribution::to_string() const {
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (auto [j, p] : pmf_) {
        if (!first) os << ',';
        first = false;
        os << j << ':' << p;
    }
    return os.str();
}

}  // namespace lobtree
