#pragma once

// Monte Carlo estimators for the barrier-killed branching random walk and
// the critical geometric Galton-Watson tree, each reported with its closed
// form where one exists.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lobtree/measures.hpp"
#include "lobtree/stats.hpp"

namespace lobtree {

struct StatReport {
    std::string name;
    std::string param;  ///< e.g. "u=50"
    double estimate = 0.0;
    double std_error = 0.0;
    std::uint64_t replicas = 0;
    std::optional<double> target;
    std::string target_ref;
    double tolerance = 0.0;
    bool pass = true;
    std::uint64_t seed = 0;
    /// Trees stopped by a node/step cap; never silently dropped.
    std::uint64_t capped = 0;
    /// Rejection-sampling attempts that failed the conditioning event.
    std::uint64_t rejected = 0;
    /// Side quantities (second moments, bias bounds, diagnostics).
    std::map<std::string, double> extra;
    std::vector<std::string> warnings;

    /// pass = |estimate - target| <= tolerance when a target is present.
    void judge();
    std::string csv_row() const;
};

inline constexpr const char* kStatCsvHeader = "name,param,estimate,se,target,tol,pass,replicas,seed";

struct RunConfig {
    std::uint64_t replicas = 10'000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::size_t node_cap = 10'000'000;
    /// Rejection attempts allowed per accepted conditioned sample.
    std::uint64_t rejection_budget = 10'000'000;
};

/// Label margin above which expansion stops when only low labels matter.
inline constexpr std::int64_t kLabelMargin = 60;

/// Materialises `replicas` trees T_1 (trees over the node cap are redrawn
/// and counted in `capped`), explores each, and counts trees where the step
/// count differs from 2|B| - |K| - 1 with |B|, |K| taken from barrier_tree
/// and killed_set, or where the frontier-only exploration disagrees.
StatReport tau_identity(const JumpDistribution& jumps, const RunConfig& cfg);

/// E|K(T_1)|, with the second moment in extra["second_moment"]. Tolerance is
/// 3 SE around 1 - E(J)/P(J=1).
StatReport mean_killed(const JumpDistribution& jumps, const RunConfig& cfg);

/// u * P(h(B(T_1)) >= u) per u. Target E(J)/P(J=1); tolerances given per u
/// (default 3 SE plus nothing).
std::vector<StatReport> tail_h_barrier(const JumpDistribution& jumps, const std::vector<std::int64_t>& u_list,
                                       const RunConfig& cfg, std::optional<double> tolerance = {});

/// u * P(psi*(B(T_1)) >= u) per u. Target E(J)^2/P(J=1).
std::vector<StatReport> tail_psi_star(const JumpDistribution& jumps, const std::vector<std::int64_t>& u_list,
                                      const RunConfig& cfg, std::optional<double> tolerance = {});

/// P(h(T_1) >= u) per u, target 1/u (exact for every u); u P in extra["u_times_p"].
std::vector<StatReport> tail_h_tree(const std::vector<std::int64_t>& u_list, const RunConfig& cfg);

/// sqrt(u) * P(|T_1| >= u), target 1/sqrt(pi).
std::vector<StatReport> tail_size_tree(const std::vector<std::int64_t>& u_list, const RunConfig& cfg,
                                       double relative_tolerance = 0.10);

/// (1/y) E #{v in B(T_1): label(v) <= y}, target 1/P(J=1).
std::vector<StatReport> label_count(const JumpDistribution& jumps, const std::vector<std::int64_t>& y_list,
                                    const RunConfig& cfg, double relative_tolerance = 0.10);

/// P(min_{m <= cutoff} S_m >= 0), target E(J)/P(J=1); extra["truncation_bound"]
/// bounds P(S dips below 0 after the cutoff).
StatReport min_walk_positive(const JumpDistribution& jumps, std::int64_t cutoff, const RunConfig& cfg);

/// Sum over m > cutoff of min_k E(exp(-k J))^m.
double walk_truncation_bound(const JumpDistribution& jumps, std::int64_t cutoff);

enum class GwCondition { size, height };

/// E(Z_m | |T| > u) or E(Z_m | h(T) >= u) per m with a linear bound C m
/// fitted at the smallest m. For the height condition, also the mean number
/// of contour visits to m given the contour hits u before 0, against
/// contour_visit_formula.
std::vector<StatReport> conditioned_generation(std::int64_t u, const std::vector<std::int64_t>& m_list,
                                               GwCondition condition, const RunConfig& cfg);

/// 2 + (2m(u-m) - u)/u + 2m - 1.
double contour_visit_formula(std::int64_t m, std::int64_t u);

/// Var(Z_1 + ... + Z_n) by Monte Carlo per n against variance_recursion(n).
std::vector<StatReport> variance_growth(const std::vector<std::int64_t>& n_list, const RunConfig& cfg);

/// Var_n = Var_{n-1} + 2n + 2 v_{n-1}, v_k = k(k+1), Var_0 = 0.
double variance_recursion(std::int64_t n);

/// E(|K(T_1)| | psi*(B(T_1)) > u) per u; all rows pass iff every pair of
/// estimates is within 2 combined SE.
std::vector<StatReport> kcal_conditioned(const JumpDistribution& jumps, const std::vector<std::int64_t>& u_list,
                                         const RunConfig& cfg);

enum class LevelCondition { none, tau, psi_star };

/// P(N_p >= kappa | condition on T_1 with threshold u), N_p the number of
/// nodes of T_1 with label p. Rows report kappa * P / p; the constant is
/// fitted at the smallest p and asserted (up to 3 SE) at the others.
std::vector<StatReport> node_count_at_level(const JumpDistribution& jumps, const std::vector<std::int64_t>& p_list,
                                            LevelCondition condition, std::int64_t u,
                                            const std::vector<std::int64_t>& kappa_list, const RunConfig& cfg);

/// E N_p unconditioned, by Monte Carlo.
StatReport mean_node_count(const JumpDistribution& jumps, std::int64_t p, const RunConfig& cfg);

/// Closed forms.
double mean_killed_target(const JumpDistribution& jumps);
double tail_h_target(const JumpDistribution& jumps);
double tail_psi_target(const JumpDistribution& jumps);
double label_count_target(const JumpDistribution& jumps);

}  // namespace lobtree
