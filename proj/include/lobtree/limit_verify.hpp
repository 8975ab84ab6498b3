#pragma once

// Finite-n statistical checks of the scaling limit: fixed-time marginals
// against reflected Gaussian laws, the mass/price ratio, the density profile
// below the price, local times, the excursion coupling and regeneration.
// All runs start from the empty book.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lobtree/lob_sim.hpp"
#include "lobtree/stats.hpp"

namespace lobtree {

class ReferenceLaw {
public:
    enum class Kind { reflected_gaussian_abs, levy_local_time };

    /// |N(0, sigma2 t)|.
    static ReferenceLaw reflected_gaussian_abs(double sigma2, double t);
    /// |N(0, t)| / sigma.
    static ReferenceLaw levy_local_time(double sigma, double t);

    Kind kind() const noexcept { return kind_; }
    /// Scale s with the law of s |N(0,1)|.
    double scale() const noexcept { return scale_; }
    double cdf(double x) const noexcept;
    double mean() const noexcept;
    double sample(Stream& rng) const;

private:
    ReferenceLaw(Kind kind, double scale) : kind_(kind), scale_(scale) {}
    Kind kind_;
    double scale_;
};

struct TestResult {
    std::string experiment;
    std::string statistic;
    double value = 0.0;
    double threshold = 0.0;
    /// pass iff value <= threshold (upper) or value >= threshold (lower).
    bool upper = true;
    bool pass = false;
    bool inconclusive = false;
    std::optional<double> p_value;
    std::size_t sample_size = 0;
    std::size_t sample_size_b = 0;
    std::int64_t n = 0;
    std::uint64_t replicas = 0;
    std::uint64_t seed = 0;
    std::string note;

    void judge() { pass = !inconclusive && (upper ? value <= threshold : value >= threshold); }
    std::string csv_row() const;
};

inline constexpr const char* kTestCsvHeader = "experiment,statistic,value,threshold,pass";

struct LimitConfig {
    std::uint64_t replicas = 2000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

/// Scaled state of one replica at the requested times.
struct MarginalDraw {
    std::vector<double> price;
    std::vector<double> mass;
    std::vector<double> l_price;  ///< L^{n,pi}
    std::vector<double> l_mass;   ///< L^{n,M}
    /// eps_occupation[i][k]: (1/eps_k) Leb{u <= t_i : price^n_u <= eps_k}
    std::vector<std::vector<double>> eps_occupation;
    /// mass_upto[i][k]: X_{t_i}([0, y_k])
    std::vector<std::vector<double>> mass_upto;
};

/// One draw per replica (replica order). `eps_list` and `y_list` may be empty.
std::vector<MarginalDraw> sample_marginals(const ModelParams& params, std::int64_t n, const std::vector<double>& t_list,
                                           const std::vector<double>& eps_list, const std::vector<double>& y_list,
                                           const LimitConfig& cfg);

/// KS distance of the scaled price at t against |N(0, 2 lambda E(J)^2 t)|.
TestResult price_marginal_test(const ModelParams& params, std::int64_t n, double t, const LimitConfig& cfg,
                               double threshold = 0.08);

/// KS distance of the scaled mass against |N(0, 2 lambda t)|, and the mean
/// mass relative to its limit (second result, threshold 5%).
std::vector<TestResult> mass_marginal_test(const ModelParams& params, std::int64_t n, double t,
                                           const LimitConfig& cfg, double threshold = 0.08,
                                           double mean_tolerance = 0.05);

/// E|M - pi/E(J)| at t per n; the final result passes iff the value at the
/// largest n is below half the value at the smallest n and below `cap`.
std::vector<TestResult> ratio_test(const ModelParams& params, const std::vector<std::int64_t>& n_list, double t,
                                   const LimitConfig& cfg, double cap = 0.15);

/// Mean of E(J) X_t([0,y]) / y over replicas with scaled price > p0, per y;
/// passes iff within `tolerance` of 1. Inconclusive below `min_hits`.
std::vector<TestResult> density_profile_test(const ModelParams& params, std::int64_t n, double t, double p0,
                                             const std::vector<double>& y_grid, const LimitConfig& cfg,
                                             double tolerance = 0.15, std::size_t min_hits = 100);

struct LocalTimeThresholds {
    double mean_relative = 0.10;  ///< E L^{n,pi}_t against its reference
    double ratio_abs = 0.05;      ///< L^{n,M}/L^{n,pi} against E(J)
    double scaling_relative = 0.15;  ///< mean L^{n,pi}_{4t} / mean L^{n,pi}_t against 2
};

/// (i) mean |L^{n,pi}_t - eps-occupation| decreasing along eps_list;
/// (ii) E L^{n,pi}_t against E|N(0,t)|/(alpha E(J)) (Levy reference);
/// (ii') the same against the occupation-density normalisation 2 E|N(0,t)|/(alpha E(J));
/// (iii) E L^{n,M}_t against 2 E|N(0,t)|/alpha (exact: E M_t / lambda);
/// (iv) E L^{n,M}_t / E L^{n,pi}_t against E(J);
/// (v) quadrupling t doubles the mean of L^{n,pi}.
std::vector<TestResult> local_time_tests(const ModelParams& params, std::int64_t n, double t,
                                         const std::vector<double>& eps_list, const LimitConfig& cfg,
                                         const LocalTimeThresholds& thresholds = {});

/// Pooled idle fraction: sum of time with mass 0 over sum of time with price 0
/// over `cfg.replicas` paths of length `horizon`; passes iff within
/// `tolerance` of E(J).
TestResult idle_fraction_test(const ModelParams& params, double horizon, const LimitConfig& cfg,
                              double tolerance = 0.02);

struct ExcursionStats {
    std::vector<double> steps;  ///< jump_count - 1, or tau
    std::vector<double> height;
    std::vector<double> deposited;
    std::vector<double> duration;
    std::uint64_t censored = 0;
};

/// First excursion above a of the chain from the empty book, one per replica;
/// excursions with more than step_cap steps are censored.
ExcursionStats ctmc_excursions(const ModelParams& params, Level a, std::int64_t step_cap, const LimitConfig& cfg);

/// Explorations of fresh T_{a+1}, one per replica, censored the same way.
ExcursionStats tree_excursions(const ModelParams& params, Level a, std::int64_t step_cap, const LimitConfig& cfg);

/// Two-sample KS between ctmc_excursions and tree_excursions for the four
/// statistics; each passes iff p >= alpha.
std::vector<TestResult> coupling_equivalence_test(const ModelParams& params, Level a, const LimitConfig& cfg,
                                                  std::int64_t step_cap = 1'000'000, double alpha = 0.01);

/// Successive excursions above a on one path: lag-1 Spearman correlation of
/// step counts inside its 95% null band, split-half KS on heights at alpha,
/// a shuffled-surrogate control, and KS of heights against fresh trees.
std::vector<TestResult> excursion_iid_test(const ModelParams& params, Level a, std::size_t min_excursions,
                                           const LimitConfig& cfg, std::uint64_t max_events = 2'000'000'000,
                                           double alpha = 0.01);

}  // namespace lobtree
