#pragma once

// Run orchestration and the canonical JSON report.
//
// The report is an nlohmann::json object. Objects are key-sorted and every floating-point number
// is rounded to 10 significant digits before serialization, so identical runs give identical
// bytes and parse/re-serialize is the identity. docs/report_schema.md documents the layout.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "confidence.hpp"
#include "error.hpp"
#include "gauss.hpp"
#include "io.hpp"
#include "moments.hpp"
#include "pairwise.hpp"
#include "randomization.hpp"
#include "ranks.hpp"
#include "statistics.hpp"

namespace steelrank {

inline constexpr int report_schema_version = 1;

enum class Method { asymptotic, simulated, exact, all };
enum class Mode { steel, pairwise, confidence, quality_harness };
enum class OutputFormat { json, text };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::asymptotic: return "asymptotic";
        case Method::simulated: return "simulated";
        case Method::exact: return "exact";
        case Method::all: return "all";
    }
    return "?";
}

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::steel: return "steel";
        case Mode::pairwise: return "pairwise";
        case Mode::confidence: return "confidence";
        case Mode::quality_harness: return "quality_harness";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    if (s == "asymptotic") return Method::asymptotic;
    if (s == "simulated") return Method::simulated;
    if (s == "exact") return Method::exact;
    if (s == "all") return Method::all;
    fail(ErrorKind::parameter, "unknown method '" + std::string(s) + "'");
}

inline Mode parse_mode(std::string_view s) {
    if (s == "steel") return Mode::steel;
    if (s == "pairwise") return Mode::pairwise;
    if (s == "confidence") return Mode::confidence;
    if (s == "quality_harness" || s == "quality-harness") return Mode::quality_harness;
    fail(ErrorKind::parameter, "unknown mode '" + std::string(s) + "'");
}

inline BoundDirection parse_bound_direction(std::string_view s) {
    if (s == "upper") return BoundDirection::upper;
    if (s == "lower") return BoundDirection::lower;
    if (s == "interval") return BoundDirection::interval;
    fail(ErrorKind::parameter, "unknown bound direction '" + std::string(s) + "'");
}

struct RunConfig {
    std::vector<std::string> inputs;
    InputFormat format = InputFormat::csv_long;
    std::string control;  // empty: first group in the input
    Alternative alternative = Alternative::greater;
    Method method = Method::all;
    std::uint64_t nsim = 10'000;
    std::uint64_t seed = 1;
    double conf_level = 0.95;
    double round_eps = 0.0;
    BoundDirection bound = BoundDirection::interval;
    Mode mode = Mode::steel;
    int nodes = 160;
    OutputFormat output = OutputFormat::json;
    double epsilon = 0.1;
    std::int64_t min_group_size = 5;
    std::uint64_t exact_budget = 10'000'000;
    bool plus_one = false;
    bool continuity_correction = false;
    std::optional<int> pre_round;
    unsigned threads = 0;  // never part of the report

    void validate() const {
        if (nsim < 1) fail(ErrorKind::parameter, "nsim must be >= 1");
        if (!(conf_level > 0.0 && conf_level < 1.0)) fail(ErrorKind::parameter, "conf-level must lie in (0, 1)");
        if (!(round_eps >= 0.0)) fail(ErrorKind::parameter, "round-eps must be >= 0");
        if (!(epsilon > 0.0 && epsilon < 1.0)) fail(ErrorKind::parameter, "epsilon must lie in (0, 1)");
        QuadratureOptions{nodes, 8.5}.panels();
    }
};

using Json = nlohmann::json;

namespace detail {

/// Rounds to 10 significant digits; non-finite values become null.
inline Json number(double x) {
    if (!std::isfinite(x)) return nullptr;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    double r = std::strtod(buf, nullptr);
    if (r == 0.0) r = 0.0;  // drop negative zero
    return r;
}

inline Json numbers(const std::vector<double>& xs) {
    Json out = Json::array();
    for (double x : xs) out.push_back(number(x));
    return out;
}

inline std::vector<double> sqrt_all(const std::vector<double>& xs) {
    std::vector<double> out;
    for (double x : xs) out.push_back(std::sqrt(x));
    return out;
}

inline Json p_value_json(const PValue& p) {
    Json out = {{"estimate", number(p.estimate)}, {"method", to_string(p.method)}};
    if (p.method == PMethod::monte_carlo || p.nsim > 0) {
        out["nsim"] = p.nsim;
        out["seed"] = p.seed;
        out["std_error"] = number(p.std_error);
    }
    return out;
}

inline Json config_json(const RunConfig& c) {
    Json out = {{"inputs", c.inputs},
                {"format", to_string(c.format)},
                {"control", c.control},
                {"alternative", to_string(c.alternative)},
                {"method", to_string(c.method)},
                {"nsim", c.nsim},
                {"seed", c.seed},
                {"conf_level", number(c.conf_level)},
                {"round_eps", number(c.round_eps)},
                {"bound", to_string(c.bound)},
                {"mode", to_string(c.mode)},
                {"nodes", c.nodes},
                {"epsilon", number(c.epsilon)},
                {"min_group_size", c.min_group_size},
                {"exact_budget", c.exact_budget},
                {"plus_one", c.plus_one},
                {"continuity_correction", c.continuity_correction}};
    out["pre_round"] = c.pre_round ? Json(*c.pre_round) : Json(nullptr);
    return out;
}

inline Json diagnostics_json(const Diagnostics& d) {
    return {{"max_tie_fraction", number(d.max_tie_fraction)},
            {"min_group_fraction", number(d.min_group_fraction)},
            {"epsilon", number(d.epsilon)},
            {"warnings", d.warnings}};
}

inline Json moments_json(const MomentSet& m) {
    return {{"mu", numbers(m.mu)},
            {"tau", numbers(sqrt_all(m.tau2))},
            {"sigma0", number(m.sigma0())},
            {"sigma", numbers(sqrt_all(m.sigma2))},
            {"tie_adjusted", m.tie_adjusted},
            {"tie_correction_ratio", numbers(m.tie_correction_ratio)}};
}

inline Json observation_json(const SteelObservation& o) {
    return {{"w_star", numbers(o.w_star)},
            {"standardized", numbers(o.standardized)},
            {"s_max", number(o.s_max)},
            {"s_min", number(o.s_min)},
            {"s_abs", number(o.s_abs)},
            {"alternative", to_string(o.alternative)},
            {"statistic", to_string(statistic_for(o.alternative))},
            {"value", number(o.value())}};
}

inline Json bounds_json(const OneSidedBounds& b) {
    const auto& s = b.selection;
    return {{"side", to_string(b.side)},
            {"level", number(s.gamma)},
            {"threshold", number(s.threshold)},
            {"j_conservative", s.j_conservative},
            {"j_closest", s.j_closest},
            {"bound_conservative", numbers(b.conservative)},
            {"bound_closest", numbers(b.closest)},
            {"achieved_conservative", number(s.achieved_conservative)},
            {"achieved_closest", number(s.achieved_closest)},
            {"unreachable", s.unreachable}};
}

inline Json confidence_json(const ConfidenceResult& r) {
    Json out = {{"direction", to_string(r.direction)},
                {"nominal_gamma", number(r.nominal_gamma)},
                {"one_sided_level", number(r.one_sided_level)},
                {"widened_by", number(r.widened_by)},
                {"warnings", r.warnings}};
    out["lower"] = r.lower ? bounds_json(*r.lower) : Json(nullptr);
    out["upper"] = r.upper ? bounds_json(*r.upper) : Json(nullptr);
    return out;
}

inline void append(std::vector<std::string>& into, const std::vector<std::string>& from) {
    into.insert(into.end(), from.begin(), from.end());
}

}  // namespace detail

/// One row of the approximation-quality table.
struct HarnessRow {
    double threshold = 0.0;
    double p_sim = 0.0;
    double p_asym_adj = 0.0;
    double p_asym_unadj = 0.0;
};

/// Default threshold grid for the statistic of `alternative`, step 0.05.
inline std::vector<double> harness_thresholds(Alternative alternative) {
    double lo = -1.0;
    double hi = 4.5;
    if (alternative == Alternative::less) {
        lo = -4.5;
        hi = 1.0;
    } else if (alternative == Alternative::two_sided) {
        lo = 0.0;
    }
    std::vector<double> out;
    for (int k = 0; lo + 0.05 * k <= hi + 1e-9; ++k) out.push_back(lo + 0.05 * k);
    return out;
}

/// Simulated tail of the properly standardized statistic next to its normal approximation with
/// tie-corrected moments and with moments that ignore ties.
inline std::vector<HarnessRow> quality_harness(const RankedSamples& samples, Alternative alternative, std::span<const double> thresholds,
                                               const SimulationOptions& sim, const QuadratureOptions& quad = {}) {
    const MomentSet adjusted = factor_decomposition(samples, true);
    const MomentSet unadjusted = factor_decomposition(samples, false);
    const FactorModel model_adj = FactorModel::from_moments(adjusted);
    const FactorModel model_unadj = FactorModel::from_moments(unadjusted);
    const Statistic stat = statistic_for(alternative);
    const auto p_sim = simulated_tail_curve(samples, stat, thresholds, sim, &adjusted);
    std::vector<HarnessRow> rows;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        HarnessRow row;
        row.threshold = thresholds[t];
        row.p_sim = p_sim[t];
        const double u = alternative == Alternative::two_sided ? std::max(0.0, thresholds[t]) : thresholds[t];
        row.p_asym_adj = tail_prob(model_adj, alternative, u, quad);
        row.p_asym_unadj = tail_prob_rescaled(model_unadj, alternative, u, model_adj.tau, quad);
        rows.push_back(row);
    }
    return rows;
}

inline std::string harness_csv(const std::vector<HarnessRow>& rows) {
    std::string out = "threshold,p_sim,p_asym_adj,p_asym_unadj\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g\n", r.threshold, r.p_sim, r.p_asym_adj, r.p_asym_unadj);
        out += buf;
    }
    return out;
}

namespace detail {

inline Json run_steel(const RunConfig& cfg, const RankedSamples& samples, Json& report, std::vector<std::string>& warnings) {
    const MomentSet moments = factor_decomposition(samples);
    append(warnings, moments.warnings);
    const SteelObservation obs = steel_statistics(samples, moments, cfg.alternative);
    for (std::size_t i = 0; i < obs.degenerate.size(); ++i)
        if (obs.degenerate[i]) warnings.push_back("degenerate tau for treatment " + std::to_string(i + 1) + ": standardized value set to 0");
    report["moments"] = moments_json(moments);
    report["observation"] = observation_json(obs);

    const QuadratureOptions quad{cfg.nodes, 8.5};
    Json p = Json::object();
    {
        const SteelObservation used = cfg.continuity_correction ? continuity_corrected(obs) : obs;
        PValue asym;
        asym.method = PMethod::asymptotic;
        asym.estimate = tail_prob(FactorModel::from_moments(moments), cfg.alternative, used.value(), quad);
        if (cfg.method == Method::asymptotic || cfg.method == Method::all) p["asymptotic"] = p_value_json(asym);
    }
    const SimulationOptions sim{cfg.nsim, cfg.seed, cfg.threads, cfg.plus_one};
    const ExactOptions exact{cfg.exact_budget};
    bool simulate = cfg.method == Method::simulated;
    if (cfg.method == Method::exact) {
        try {
            p["exact"] = p_value_json(exact_p_value(samples, obs, exact));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::budget) fail(ErrorKind::budget, std::string(e.what()) + " (try --method simulated)");
            throw;
        }
    } else if (cfg.method == Method::all) {
        try {
            p["exact"] = p_value_json(exact_p_value(samples, obs, exact));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::budget) throw;
            simulate = true;
        }
    }
    if (simulate) p["simulated"] = p_value_json(simulate_p_value(samples, obs, sim));
    return p;
}

inline Json run_pairwise(const RunConfig& cfg, const RankedSamples& samples, const std::vector<std::string>& labels, Json& report) {
    if (cfg.method == Method::exact) fail(ErrorKind::parameter, "exact p-values are not available in pairwise mode");
    const SimulationOptions sim{cfg.nsim, cfg.seed, cfg.threads, cfg.plus_one};
    Json p = Json::object();
    std::optional<PairwiseResult> first;
    if (cfg.method == Method::simulated || cfg.method == Method::all) {
        first = pairwise_test(samples, cfg.alternative, PairwiseMethod::monte_carlo, sim);
        p["simulated"] = p_value_json(first->p_value);
    }
    if (cfg.method == Method::asymptotic || cfg.method == Method::all) {
        auto res = pairwise_test(samples, cfg.alternative, PairwiseMethod::mvn_sample, sim);
        p["mvn_sample"] = p_value_json(res.p_value);
        if (!first) first = std::move(res);
    }
    Json pairs = Json::array();
    for (const auto& [a, b] : first->pairs) pairs.push_back({labels[a], labels[b]});
    report["pairwise"] = {{"pairs", pairs},
                          {"w_star", numbers(first->w_star)},
                          {"mu", numbers(first->mu)},
                          {"tau", numbers(first->tau)},
                          {"standardized", numbers(first->standardized)},
                          {"s_max", number(first->s_max)},
                          {"s_min", number(first->s_min)},
                          {"s_abs", number(first->s_abs)}};
    return p;
}

}  // namespace detail

/// Runs one analysis on in-memory data. `data.samples[0]` is the control unless cfg.control names
/// another group.
inline Json run(const RunConfig& cfg, Dataset data) {
    cfg.validate();
    if (data.samples.size() < 2) fail(ErrorKind::data, "need at least two groups");
    if (!cfg.control.empty()) data.move_to_front(cfg.control);
    if (cfg.pre_round) data.round_to(*cfg.pre_round);

    Json report = Json::object();
    report["schema"] = "steelrank.report";
    report["schema_version"] = report_schema_version;
    report["config"] = detail::config_json(cfg);
    Json groups = Json::array();
    for (std::size_t g = 0; g < data.labels.size(); ++g) groups.push_back({{"label", data.labels[g]}, {"n", data.samples[g].size()}});
    report["groups"] = groups;

    const RankedSamples samples = rank_samples(data.samples);
    const Diagnostics diag = check_asymptotic_conditions(samples, {cfg.epsilon, cfg.min_group_size});
    report["diagnostics"] = detail::diagnostics_json(diag);
    std::vector<std::string> warnings = diag.warnings;

    switch (cfg.mode) {
        case Mode::steel:
            report["p_values"] = detail::run_steel(cfg, samples, report, warnings);
            break;
        case Mode::pairwise:
            report["p_values"] = detail::run_pairwise(cfg, samples, data.labels, report);
            break;
        case Mode::confidence: {
            const auto res = simultaneous_confidence(data.samples, cfg.conf_level, cfg.bound, cfg.round_eps,
                                                     SelectOptions{CoverageMethod::normal, QuadratureOptions{cfg.nodes, 8.5}, {}});
            detail::append(warnings, res.warnings);
            report["confidence"] = detail::confidence_json(res);
            break;
        }
        case Mode::quality_harness: {
            const auto thresholds = harness_thresholds(cfg.alternative);
            const auto rows = quality_harness(samples, cfg.alternative, thresholds, SimulationOptions{cfg.nsim, cfg.seed, cfg.threads, cfg.plus_one},
                                              QuadratureOptions{cfg.nodes, 8.5});
            Json table = Json::array();
            for (const auto& r : rows)
                table.push_back({detail::number(r.threshold), detail::number(r.p_sim), detail::number(r.p_asym_adj), detail::number(r.p_asym_unadj)});
            report["harness"] = {{"columns", {"threshold", "p_sim", "p_asym_adj", "p_asym_unadj"}},
                                 {"statistic", to_string(statistic_for(cfg.alternative))},
                                 {"rows", table}};
            const MomentSet adjusted = factor_decomposition(samples);
            report["moments"] = detail::moments_json(adjusted);
            report["moments_unadjusted"] = detail::moments_json(factor_decomposition(samples, false));
            break;
        }
    }
    report["warnings"] = warnings;
    return report;
}

inline Json run(const RunConfig& cfg) { return run(cfg, read_samples(cfg.inputs, cfg.format)); }

inline std::string serialize(const Json& report) { return report.dump(2) + "\n"; }

inline Json error_json(const Error& e) { return {{"error", {{"kind", to_string(e.kind())}, {"message", e.what()}}}}; }

/// Plain-text rendering of a report.
inline std::string render_text(const Json& r) {
    std::ostringstream out;
    const auto& cfg = r.at("config");
    out << "steelrank " << cfg.at("mode").get<std::string>() << " (alternative " << cfg.at("alternative").get<std::string>() << ")\n";
    out << "groups:";
    for (const auto& g : r.at("groups")) out << ' ' << g.at("label").get<std::string>() << "(n=" << g.at("n") << ')';
    out << '\n';
    if (r.contains("observation")) {
        const auto& o = r.at("observation");
        out << "W*: " << o.at("w_star").dump() << "\nstandardized: " << o.at("standardized").dump() << '\n';
        out << o.at("statistic").get<std::string>() << " = " << o.at("value").dump() << '\n';
    }
    if (r.contains("moments")) {
        const auto& m = r.at("moments");
        out << "mu: " << m.at("mu").dump() << "  tau: " << m.at("tau").dump() << "  sigma0: " << m.at("sigma0").dump()
            << "  sigma: " << m.at("sigma").dump() << '\n';
    }
    if (r.contains("pairwise")) {
        const auto& pw = r.at("pairwise");
        out << "pairs: " << pw.at("pairs").dump() << "\nstandardized: " << pw.at("standardized").dump() << '\n';
    }
    if (r.contains("p_values")) {
        for (const auto& [name, p] : r.at("p_values").items()) {
            out << "p (" << name << "): " << p.at("estimate").dump();
            if (p.contains("std_error")) out << "  se " << p.at("std_error").dump() << "  nsim " << p.at("nsim");
            out << '\n';
        }
    }
    if (r.contains("confidence")) {
        const auto& c = r.at("confidence");
        for (const char* side : {"lower", "upper"}) {
            if (c.at(side).is_null()) continue;
            const auto& b = c.at(side);
            out << side << " bounds (level " << b.at("level").dump() << "): " << b.at("bound_conservative").dump()
                << "  achieved " << b.at("achieved_conservative").dump() << "  closest " << b.at("bound_closest").dump()
                << "  achieved " << b.at("achieved_closest").dump() << '\n';
        }
    }
    if (r.contains("harness")) {
        out << "threshold,p_sim,p_asym_adj,p_asym_unadj\n";
        for (const auto& row : r.at("harness").at("rows"))
            out << row[0].dump() << ',' << row[1].dump() << ',' << row[2].dump() << ',' << row[3].dump() << '\n';
    }
    for (const auto& w : r.at("warnings")) out << "warning: " << w.get<std::string>() << '\n';
    return out.str();
}

}  // namespace steelrank
