#pragma once

// Summary statistics, goodness-of-fit tests and the replica runner.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "lobtree/rng.hpp"

namespace lobtree {

double normal_cdf(double x) noexcept;

/// Welford accumulator; merge() is associative (up to rounding) and is
/// always applied in replica order by the runner.
class RunningStats {
public:
    void add(double x) noexcept;
    void merge(const RunningStats& other) noexcept;

    std::uint64_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    /// Unbiased sample variance (0 for fewer than two samples).
    double variance() const noexcept;
    double sd() const noexcept { return std::sqrt(variance()); }
    /// sd / sqrt(count).
    double std_error() const noexcept;
    double min() const noexcept { return min_; }
    double max() const noexcept { return max_; }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
    double min_ = INFINITY;
    double max_ = -INFINITY;
};

/// Survival function of the Kolmogorov distribution, P(K > x).
double kolmogorov_sf(double x) noexcept;

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    std::size_t m = 0;  ///< 0 for the one-sample test
};

/// sup |F_n - F| against a continuous CDF. Sorts a copy of the sample.
KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf);

/// Two-sample statistic sup |F_n - G_m| with ties handled jointly, and the
/// asymptotic p-value at the effective size nm/(n+m).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Midranks (1-based) with ties averaged.
std::vector<double> average_ranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

/// Sample variance and the standard error of that variance, from the fourth
/// central moment: se^2 = (m4 - s^4 (n-3)/(n-1)) / n.
struct VarianceEstimate {
    double variance = 0.0;
    double std_error = 0.0;
};
VarianceEstimate variance_with_error(std::span<const double> x);

inline constexpr std::size_t kReplicaBlock = 4096;

/// Runs `replicas` independent replicas on `threads` workers. Replica i gets
/// seed_streams(master_seed, i). Replicas are processed in fixed blocks; each
/// block folds into its own accumulator and blocks merge in index order, so
/// the result does not depend on the thread count or schedule.
template <class Acc, class Body, class Merge>
Acc run_replicas(std::uint64_t replicas, std::uint64_t master_seed, unsigned threads, Body body, Merge merge,
                 const Acc& init = Acc{}) {
    const std::uint64_t blocks = (replicas + kReplicaBlock - 1) / kReplicaBlock;
    std::vector<Acc> partial(blocks, init);
    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::uint64_t b = next.fetch_add(1);
            if (b >= blocks) return;
            const std::uint64_t lo = b * kReplicaBlock;
            const std::uint64_t hi = std::min(replicas, lo + kReplicaBlock);
            for (std::uint64_t i = lo; i < hi; ++i) {
                Stream s = seed_streams(master_seed, i);
                body(s, i, partial[b]);
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::uint64_t>(blocks, 1))));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n);
        for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    Acc out = init;
    for (auto& p : partial) merge(out, p);
    return out;
}

/// Convenience form collecting one double per replica, in replica order.
template <class Body>
std::vector<double> collect_replicas(std::uint64_t replicas, std::uint64_t master_seed, unsigned threads,
                                     Body body) {
    return run_replicas<std::vector<double>>(
        replicas, master_seed, threads,
        [&](Stream& s, std::uint64_t i, std::vector<double>& acc) { acc.push_back(body(s, i)); },
        [](std::vector<double>& into, std::vector<double>& from) {
            into.insert(into.end(), from.begin(), from.end());
        });
}

unsigned default_threads() noexcept;

}  // namespace lobtree
