#include "lobtree/harness.hpp"

#include "lobtree/tree.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace lobtree {

namespace {

using Thresholds = std::map<std::string, double>;

const std::vector<ExperimentInfo> kRegistry = {
    {"tau_identity", "Eq. (formula-tau)", "explore() steps equal 2|B|-|K|-1 on every tree", 1'000'000,
     {{"node_cap", 100'000}}},
    {"mean_killed", "Eq. (mean-killed)", "E|K(T_1)| against 1 - E(J)/P(J=1)", 1'000'000, {{"se_multiple", 3}}},
    {"tail_h_tree", "Eq. (tail-behavior-size+height)", "P(h(T_1) >= u) against 1/u", 1'000'000,
     {{"se_multiple", 3}}},
    {"tail_size_tree", "Eq. (tail-behavior-size+height)", "sqrt(u) P(|T_1| >= u) against 1/sqrt(pi)", 1'000'000,
     {{"rel_tol", 0.10}}},
    {"tail_h_barrier", "Lemma A.2", "u P(h(B(T_1)) >= u) against E(J)/P(J=1)", 2'000'000, {{"tol", 0.08}}},
    {"tail_psi_star", "Lemma A.3", "u P(psi*(B(T_1)) >= u) against E(J)^2/P(J=1)", 2'000'000, {{"tol", 0.05}}},
    {"label_count", "Eq. (m)", "(1/y) E #{v in B(T_1): label <= y} against 1/P(J=1)", 200'000,
     {{"rel_tol", 0.10}}},
    {"min_walk_positive", "Lemma A.1", "P(min S >= 0 up to the cutoff) against E(J)/P(J=1)", 1'000'000,
     {{"cutoff", 1000}}},
    {"conditioned_generation", "Eq. (GW)", "E(Z_m | condition) and contour visits given hitting u", 100'000, {}},
    {"variance_growth", "Eq. (variance-Z)", "Var(Z_1+...+Z_n) against the exact recursion", 1'000'000, {}},
    {"kcal_conditioned", "Eq. (kcal)", "E(|K| | psi*(B) > u) flat in u", 20'000, {}},
    {"node_count_at_level", "Eq. (estimate-D-2)", "kappa P(N_p >= kappa | condition)/p bounded", 20'000,
     {{"u", 10}}},
    {"price_marginal", "Theorem 2.1", "KS of the scaled price against |N(0, 2 lambda E(J)^2 t)|", 2000,
     {{"ks", 0.08}}},
    {"mass_marginal", "Eq. (joint-law)", "KS of the scaled mass against |N(0, 2 lambda t)|", 2000,
     {{"ks", 0.08}, {"mean_rel", 0.05}}},
    {"ratio", "Lemma 5.10", "E|M - pi/E(J)| halves along n", 1000, {{"cap", 0.15}}},
    {"density_profile", "Eq. (limit)", "E(J) X_t([0,y])/y near 1 below the price", 2000,
     {{"tol", 0.15}, {"p0", 0.5}, {"min_hits", 100}}},
    {"local_time", "Lemma 5.9", "local times at 0 of price and mass", 2000,
     {{"mean_rel", 0.10}, {"ratio_abs", 0.05}, {"scaling_rel", 0.15}}},
    {"idle_fraction", "Eq. (G/M/1)", "time with mass 0 over time with price 0 against E(J)", 32, {{"tol", 0.02}}},
    {"coupling_equivalence", "Theorem 3.1", "excursions of the chain against tree explorations", 10'000,
     {{"alpha", 0.01}, {"step_cap", 1'000'000}}},
    {"excursion_iid", "Lemma 2.2", "successive excursions above a are i.i.d.", 1,
     {{"alpha", 0.01}, {"min_excursions", 5000}}},
};

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        try {
            if constexpr (std::is_same_v<T, double>)
                out.push_back(std::stod(item, &used));
            else
                out.push_back(static_cast<T>(std::stoll(item, &used)));
        } catch (const std::exception&) {
            throw ConfigError("cannot parse list item '" + item + "'");
        }
        if (used != item.size()) throw ConfigError("cannot parse list item '" + item + "'");
    }
    return out;
}

template <class T>
T parse_scalar(const std::string& key, const std::string& text) {
    auto v = parse_list<T>(text);
    if (v.size() != 1) throw ConfigError("bad value for " + key + ": '" + text + "'");
    return v.front();
}

}  // namespace

const std::vector<ExperimentInfo>& registry() { return kRegistry; }

const ExperimentInfo* find_experiment(const std::string& name) {
    for (const auto& e : kRegistry)
        if (e.name == name) return &e;
    return nullptr;
}

std::string list_experiments() {
    std::ostringstream os;
    for (const auto& e : kRegistry) {
        os << std::left << std::setw(24) << e.name << std::setw(34) << e.anchor << "replicas=" << e.default_replicas;
        for (const auto& [k, v] : e.thresholds) os << ' ' << k << '=' << fmt(v);
        os << "  " << e.description << '\n';
    }
    return os.str();
}


void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "experiment") cfg.experiment = value;
    else if (key == "lambda") cfg.lambda = parse_scalar<double>(key, value);
    else if (key == "j-pmf") cfg.j_pmf = value;
    else if (key == "n") cfg.n = parse_scalar<std::int64_t>(key, value);
    else if (key == "t") cfg.t = parse_scalar<double>(key, value);
    else if (key == "horizon") cfg.horizon = parse_scalar<double>(key, value);
    else if (key == "replicas") {
        const auto r = parse_scalar<std::int64_t>(key, value);
        if (r < 1) throw ConfigError("replicas must be >= 1");
        cfg.replicas = static_cast<std::uint64_t>(r);
    } else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_scalar<std::int64_t>(key, value));
    else if (key == "u-list") cfg.u_list = parse_list<std::int64_t>(value);
    else if (key == "y-list") cfg.y_list = parse_list<double>(value);
    else if (key == "eps-list") cfg.eps_list = parse_list<double>(value);
    else if (key == "node-cap") cfg.node_cap = static_cast<std::size_t>(parse_scalar<std::int64_t>(key, value));
    else if (key == "rejection-budget") {
        const auto b = parse_scalar<std::int64_t>(key, value);
        if (b < 1) throw ConfigError("rejection-budget must be >= 1");
        cfg.rejection_budget = static_cast<std::uint64_t>(b);
    }
    else if (key == "out") cfg.out = value;
    else if (key == "format") cfg.format = value;
    else if (key == "threads") cfg.threads = static_cast<unsigned>(parse_scalar<std::int64_t>(key, value));
    else if (key.rfind("threshold.", 0) == 0) cfg.thresholds[key.substr(10)] = parse_scalar<double>(key, value);
    else if (key == "m-list") cfg.m_list = parse_list<std::int64_t>(value);
    else if (key == "n-list") cfg.n_list = parse_list<std::int64_t>(value);
    else if (key == "p-list") cfg.p_list = parse_list<std::int64_t>(value);
    else if (key == "kappa-list") cfg.kappa_list = parse_list<std::int64_t>(value);
    else if (key == "a-list") cfg.a_list = parse_list<std::int64_t>(value);
    else if (key == "condition") cfg.condition = value;
    else throw ConfigError("unknown setting '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int lineno = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.experiment.empty()) throw ConfigError("no experiment given");
    if (!find_experiment(cfg.experiment)) throw ConfigError("unknown experiment '" + cfg.experiment + "'");
    try {
        ModelParams(cfg.lambda, JumpDistribution::parse(cfg.j_pmf));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid model parameters: ") + e.what());
    }
    if (cfg.replicas && *cfg.replicas < 1) throw ConfigError("replicas must be >= 1");
    if (cfg.format != "csv" && cfg.format != "json") throw ConfigError("format must be csv or json");
    if (cfg.n && *cfg.n < 1) throw ConfigError("n must be >= 1");
    if (cfg.t && *cfg.t < 0.0) throw ConfigError("t must be >= 0");
    if (cfg.horizon && !(*cfg.horizon > 0.0)) throw ConfigError("horizon must be positive");
}

namespace {

struct Context {
    const ExperimentConfig& cfg;
    const ExperimentInfo& info;
    ModelParams params;
    Thresholds thresholds;

    std::uint64_t replicas() const { return cfg.replicas.value_or(info.default_replicas); }
    double threshold(const std::string& key) const {
        const auto it = thresholds.find(key);
        if (it == thresholds.end()) throw std::logic_error("experiment has no threshold " + key);
        return it->second;
    }
    RunConfig run_config() const {
        RunConfig rc;
        rc.replicas = replicas();
        rc.seed = cfg.seed;
        rc.threads = cfg.threads;
        rc.node_cap = cfg.node_cap;
        rc.rejection_budget = cfg.rejection_budget;
        return rc;
    }
    LimitConfig limit_config() const { return {replicas(), cfg.seed, cfg.threads}; }

    template <class T>
    std::vector<T> or_default(const std::vector<T>& v, std::vector<T> fallback) const {
        return v.empty() ? fallback : v;
    }
};

using Runner = std::function<void(const Context&, RunOutcome&)>;

void add(RunOutcome& o, std::vector<StatReport> rows) {
    for (auto& r : rows) o.stats.push_back(std::move(r));
}
void add(RunOutcome& o, std::vector<TestResult> rows) {
    for (auto& r : rows) o.tests.push_back(std::move(r));
}

std::vector<std::int64_t> integral(const std::vector<double>& v) {
    std::vector<std::int64_t> out;
    for (double x : v) {
        if (x != std::floor(x)) throw ConfigError("expected integer values in y-list");
        out.push_back(static_cast<std::int64_t>(x));
    }
    return out;
}

const std::map<std::string, Runner>& runners() {
    static const std::map<std::string, Runner> table = {
        {"tau_identity",
         [](const Context& c, RunOutcome& o) {
             RunConfig rc = c.run_config();
             if (!c.cfg.thresholds.count("node_cap") && c.cfg.node_cap == ExperimentConfig{}.node_cap)
                 rc.node_cap = static_cast<std::size_t>(c.threshold("node_cap"));
             o.stats.push_back(tau_identity(c.params.jumps, rc));
         }},
        {"mean_killed",
         [](const Context& c, RunOutcome& o) {
             auto r = mean_killed(c.params.jumps, c.run_config());
             r.tolerance = c.threshold("se_multiple") * r.std_error;
             r.judge();
             o.stats.push_back(std::move(r));
         }},
        {"tail_h_tree",
         [](const Context& c, RunOutcome& o) {
             auto rows = tail_h_tree(c.or_default(c.cfg.u_list, {5, 10, 20}), c.run_config());
             for (auto& r : rows) {
                 r.tolerance = c.threshold("se_multiple") * r.std_error;
                 r.judge();
             }
             add(o, std::move(rows));
         }},
        {"tail_size_tree",
         [](const Context& c, RunOutcome& o) {
             add(o, tail_size_tree(c.or_default(c.cfg.u_list, {100, 400}), c.run_config(), c.threshold("rel_tol")));
         }},
        {"tail_h_barrier",
         [](const Context& c, RunOutcome& o) {
             add(o, tail_h_barrier(c.params.jumps, c.or_default(c.cfg.u_list, {50}), c.run_config(),
                                   c.threshold("tol")));
         }},
        {"tail_psi_star",
         [](const Context& c, RunOutcome& o) {
             add(o, tail_psi_star(c.params.jumps, c.or_default(c.cfg.u_list, {50}), c.run_config(),
                                  c.threshold("tol")));
         }},
        {"label_count",
         [](const Context& c, RunOutcome& o) {
             add(o, label_count(c.params.jumps, integral(c.or_default(c.cfg.y_list, {100.0})), c.run_config(),
                                c.threshold("rel_tol")));
         }},
        {"min_walk_positive",
         [](const Context& c, RunOutcome& o) {
             const auto cutoff = c.cfg.u_list.empty() ? static_cast<std::int64_t>(c.threshold("cutoff"))
                                                      : c.cfg.u_list.front();
             o.stats.push_back(min_walk_positive(c.params.jumps, cutoff, c.run_config()));
         }},
        {"conditioned_generation",
         [](const Context& c, RunOutcome& o) {
             const auto cond = c.cfg.condition == "size" ? GwCondition::size : GwCondition::height;
             if (!c.cfg.condition.empty() && c.cfg.condition != "size" && c.cfg.condition != "height")
                 throw ConfigError("condition must be size or height");
             const auto ms = c.or_default(c.cfg.m_list, {1, 2});
             for (std::int64_t u : c.or_default(c.cfg.u_list, {2, 4})) {
                 std::vector<std::int64_t> below;
                 for (auto m : ms)
                     if (m < u) below.push_back(m);
                 add(o, conditioned_generation(u, below, cond, c.run_config()));
             }
         }},
        {"variance_growth",
         [](const Context& c, RunOutcome& o) {
             add(o, variance_growth(c.or_default(c.cfg.n_list, {1, 2, 5}), c.run_config()));
         }},
        {"kcal_conditioned",
         [](const Context& c, RunOutcome& o) {
             add(o, kcal_conditioned(c.params.jumps, c.or_default(c.cfg.u_list, {0, 10, 20, 40}), c.run_config()));
         }},
        {"node_count_at_level",
         [](const Context& c, RunOutcome& o) {
             LevelCondition cond = LevelCondition::tau;
             if (c.cfg.condition == "psi_star") cond = LevelCondition::psi_star;
             else if (c.cfg.condition == "none") cond = LevelCondition::none;
             else if (!c.cfg.condition.empty() && c.cfg.condition != "tau")
                 throw ConfigError("condition must be tau, psi_star or none");
             const auto u = c.cfg.u_list.empty() ? static_cast<std::int64_t>(c.threshold("u")) : c.cfg.u_list.front();
             add(o, node_count_at_level(c.params.jumps, c.or_default(c.cfg.p_list, {2, 4, 8}), cond, u,
                                        c.or_default(c.cfg.kappa_list, {1, 2, 4, 8, 16}), c.run_config()));
         }},
        {"price_marginal",
         [](const Context& c, RunOutcome& o) {
             const auto n = c.cfg.n.value_or(100);
             const auto t = c.cfg.t.value_or(1.0);
             const auto lc = c.limit_config();
             o.tests.push_back(price_marginal_test(c.params, n, t, lc, c.threshold("ks")));
             const auto trend = c.or_default(c.cfg.n_list, {50, 200});
             if (trend.size() >= 2) {
                 const auto lo = price_marginal_test(c.params, trend.front(), t, lc, c.threshold("ks"));
                 const auto hi = price_marginal_test(c.params, trend.back(), t, lc, c.threshold("ks"));
                 TestResult r = hi;
                 r.statistic = "ks_n=" + std::to_string(trend.back()) + "_below_ks_n=" + std::to_string(trend.front());
                 r.value = hi.value;
                 r.threshold = lo.value;
                 r.upper = true;
                 r.judge();
                 o.tests.push_back(std::move(r));
             }
         }},
        {"mass_marginal",
         [](const Context& c, RunOutcome& o) {
             add(o, mass_marginal_test(c.params, c.cfg.n.value_or(100), c.cfg.t.value_or(1.0), c.limit_config(),
                                       c.threshold("ks"), c.threshold("mean_rel")));
         }},
        {"ratio",
         [](const Context& c, RunOutcome& o) {
             add(o, ratio_test(c.params, c.or_default(c.cfg.n_list, {25, 400}), c.cfg.t.value_or(1.0),
                               c.limit_config(), c.threshold("cap")));
         }},
        {"density_profile",
         [](const Context& c, RunOutcome& o) {
             add(o, density_profile_test(c.params, c.cfg.n.value_or(200), c.cfg.t.value_or(1.0), c.threshold("p0"),
                                         c.or_default(c.cfg.y_list, {0.1, 0.25, 0.4}), c.limit_config(),
                                         c.threshold("tol"), static_cast<std::size_t>(c.threshold("min_hits"))));
         }},
        {"local_time",
         [](const Context& c, RunOutcome& o) {
             LocalTimeThresholds th;
             th.mean_relative = c.threshold("mean_rel");
             th.ratio_abs = c.threshold("ratio_abs");
             th.scaling_relative = c.threshold("scaling_rel");
             add(o, local_time_tests(c.params, c.cfg.n.value_or(100), c.cfg.t.value_or(1.0),
                                     c.or_default(c.cfg.eps_list, {0.4, 0.2, 0.1}), c.limit_config(), th));
         }},
        {"idle_fraction",
         [](const Context& c, RunOutcome& o) {
             o.tests.push_back(
                 idle_fraction_test(c.params, c.cfg.horizon.value_or(1e6), c.limit_config(), c.threshold("tol")));
         }},
        {"coupling_equivalence",
         [](const Context& c, RunOutcome& o) {
             const auto a = c.cfg.a_list.empty() ? 0 : c.cfg.a_list.front();
             add(o, coupling_equivalence_test(c.params, a, c.limit_config(),
                                              static_cast<std::int64_t>(c.threshold("step_cap")), c.threshold("alpha")));
         }},
        {"excursion_iid",
         [](const Context& c, RunOutcome& o) {
             for (auto a : c.or_default(c.cfg.a_list, {0, 3}))
                 add(o, excursion_iid_test(c.params, a, static_cast<std::size_t>(c.threshold("min_excursions")),
                                           c.limit_config(), 2'000'000'000, c.threshold("alpha")));
         }},
    };
    return table;
}

std::string verdict_line(const StatReport& r) {
    std::ostringstream os;
    os << (r.pass ? "PASS " : "FAIL ") << r.name;
    if (!r.param.empty()) os << ' ' << r.param;
    os << " estimate=" << fmt(r.estimate) << " se=" << fmt(r.std_error);
    if (r.target) os << " target=" << fmt(*r.target);
    os << " tol=" << fmt(r.tolerance);
    if (r.capped) os << " capped=" << r.capped;
    for (const auto& w : r.warnings) os << " [warning: " << w << ']';
    return os.str();
}

std::string verdict_line(const TestResult& r) {
    std::ostringstream os;
    os << (r.inconclusive ? "INCONCLUSIVE " : r.pass ? "PASS " : "FAIL ") << r.experiment << ' ' << r.statistic
       << " value=" << fmt(r.value) << (r.upper ? " <= " : " >= ") << fmt(r.threshold);
    if (!r.note.empty()) os << " (" << r.note << ')';
    return os.str();
}

}  // namespace

RunOutcome run(const ExperimentConfig& cfg) {
    validate(cfg);
    const ExperimentInfo& info = *find_experiment(cfg.experiment);
    Thresholds th = info.thresholds;
    for (const auto& [k, v] : cfg.thresholds) {
        if (!th.count(k)) throw ConfigError("experiment " + info.name + " has no threshold '" + k + "'");
        th[k] = v;
    }
    Context ctx{cfg, info, ModelParams(cfg.lambda, JumpDistribution::parse(cfg.j_pmf)), th};

    RunOutcome out;
    out.experiment = info.name;
    try {
        runners().at(info.name)(ctx, out);
    } catch (const BudgetExhausted& e) {
        out.errors.push_back(e.what());
        out.exit_code = kExitInconclusive;
        out.verdicts.push_back("INCONCLUSIVE " + info.name + ": " + e.what());
        return out;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    bool failed = false;
    bool inconclusive = false;
    for (auto& r : out.stats) {
        r.target_ref = info.anchor;
        failed = failed || !r.pass;
        out.verdicts.push_back(verdict_line(r));
    }
    for (const auto& r : out.tests) {
        inconclusive = inconclusive || r.inconclusive;
        failed = failed || (!r.inconclusive && !r.pass);
        out.verdicts.push_back(verdict_line(r));
    }
    out.exit_code = failed ? kExitFail : inconclusive ? kExitInconclusive : kExitPass;
    return out;
}

std::string to_csv(const RunOutcome& o, const ExperimentConfig& cfg, const std::string& timestamp) {
    std::ostringstream os;
    os << "# lobtree " << kVersion << " experiment=" << o.experiment << " seed=" << cfg.seed
       << " lambda=" << fmt(cfg.lambda) << " j_pmf=" << cfg.j_pmf << " generated=" << timestamp << '\n';
    if (!o.stats.empty()) {
        os << kStatCsvHeader << '\n';
        for (const auto& r : o.stats) os << r.csv_row() << '\n';
    }
    if (!o.tests.empty()) {
        os << kTestCsvHeader << '\n';
        for (const auto& r : o.tests) os << r.csv_row() << '\n';
    }
    return os.str();
}

std::string to_json(const RunOutcome& o, const ExperimentConfig& cfg, const std::string& timestamp) {
    using nlohmann::json;
    json doc;
    doc["software"] = std::string("lobtree ") + kVersion;
    doc["generated"] = timestamp;
    doc["experiment"] = o.experiment;
    if (const auto* info = find_experiment(o.experiment)) doc["anchor"] = info->anchor;
    doc["seed"] = cfg.seed;
    doc["lambda"] = cfg.lambda;
    doc["j_pmf"] = cfg.j_pmf;
    doc["verdict"] = o.exit_code == kExitPass ? "pass" : o.exit_code == kExitFail ? "fail" : "inconclusive";
    doc["exit_code"] = o.exit_code;
    json stats = json::array();
    for (const auto& r : o.stats) {
        json j{{"name", r.name},         {"param", r.param},       {"estimate", r.estimate},
               {"se", r.std_error},      {"tol", r.tolerance},     {"pass", r.pass},
               {"replicas", r.replicas}, {"seed", r.seed},         {"capped", r.capped},
               {"rejected", r.rejected}, {"target_ref", r.target_ref}, {"extra", r.extra},
               {"warnings", r.warnings}};
        j["target"] = r.target ? json(*r.target) : json(nullptr);
        stats.push_back(std::move(j));
    }
    json tests = json::array();
    for (const auto& r : o.tests) {
        json j{{"experiment", r.experiment}, {"statistic", r.statistic}, {"value", r.value},
               {"threshold", r.threshold},   {"upper", r.upper},         {"pass", r.pass},
               {"inconclusive", r.inconclusive}, {"sample_size", r.sample_size},
               {"sample_size_b", r.sample_size_b}, {"n", r.n}, {"replicas", r.replicas},
               {"seed", r.seed},             {"note", r.note}};
        j["p_value"] = r.p_value ? json(*r.p_value) : json(nullptr);
        tests.push_back(std::move(j));
    }
    doc["stats"] = std::move(stats);
    doc["tests"] = std::move(tests);
    doc["errors"] = o.errors;
    return doc.dump(2) + "\n";
}

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"One-sided order book, barrier trees and scaling-limit checks"};
    app.set_version_flag("--version", kVersion);
    std::map<std::string, std::string> given;
    const std::vector<std::string> keys = {"experiment", "lambda",   "j-pmf",      "n",        "t",
                                           "horizon",    "replicas", "seed",       "u-list",   "y-list",
                                           "eps-list",   "node-cap", "out",        "format",   "threads",
                                           "m-list",     "n-list",   "p-list",     "kappa-list", "a-list",
                                           "condition",  "rejection-budget"};
    for (const auto& k : keys) app.add_option("--" + k, given[k]);
    std::string config_file;
    std::vector<std::string> threshold_overrides;
    bool list = false;
    app.add_option("--config", config_file, "key=value file; command-line flags win");
    app.add_option("--threshold", threshold_overrides, "name=value override of a registered threshold");
    app.add_flag("--list", list, "list registered experiments");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitPass : kExitConfig;
    }
    if (list) {
        std::cout << list_experiments();
        return kExitPass;
    }

    ExperimentConfig cfg;
    try {
        if (!config_file.empty())
            for (const auto& [k, v] : read_config_file(config_file))
                if (k.rfind("threshold.", 0) == 0 || app.count("--" + k) == 0) apply_setting(cfg, k, v);
        for (const auto& k : keys)
            if (app.count("--" + k) > 0) apply_setting(cfg, k, given[k]);
        for (const auto& kv : threshold_overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--threshold expects name=value");
            apply_setting(cfg, "threshold." + kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (cfg.threads == 0) cfg.threads = default_threads();
        validate(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n\nregistered experiments:\n" << list_experiments();
        return kExitConfig;
    }

    RunOutcome outcome;
    try {
        outcome = run(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }

    const std::string stamp = utc_timestamp();
    const std::string artifact = cfg.format == "json" ? to_json(outcome, cfg, stamp) : to_csv(outcome, cfg, stamp);
    std::ostream& verdicts = cfg.out.empty() ? std::cerr : std::cout;
    for (const auto& line : outcome.verdicts) verdicts << line << '\n';
    if (cfg.out.empty()) {
        std::cout << artifact;
    } else {
        std::ofstream f(cfg.out);
        if (!f) {
            std::cerr << "cannot write " << cfg.out << '\n';
            return kExitConfig;
        }
        f << artifact;
    }
    return outcome.exit_code;
}

}  // namespace lobtree
