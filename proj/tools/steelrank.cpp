// steelrank: Steel many-to-one and all-pairwise rank tests with ties.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "steelrank/steelrank.hpp"

namespace {

int exit_code(steelrank::ErrorKind kind) {
    switch (kind) {
        case steelrank::ErrorKind::data: return 3;
        case steelrank::ErrorKind::parameter: return 2;
        case steelrank::ErrorKind::budget: return 4;
        case steelrank::ErrorKind::numeric: return 5;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace steelrank;
    CLI::App app{"Steel's many-to-one rank test with ties, simultaneous shift bounds and all-pairwise comparisons"};

    RunConfig cfg;
    std::string format = "csv_long";
    std::string alternative = "greater";
    std::string method = "all";
    std::string mode = "steel";
    std::string output = "json";
    std::string bound = "interval";
    std::string out_path;
    std::string csv_path;
    int pre_round = -1;

    app.add_option("-i,--input", cfg.inputs, "Input file(s)")->required();
    app.add_option("--format", format, "csv_long | csv_wide | whitespace")->capture_default_str();
    app.add_option("--control", cfg.control, "Control group label (default: first group)");
    app.add_option("--alternative", alternative, "greater | less | two-sided")->capture_default_str();
    app.add_option("--method", method, "asymptotic | simulated | exact | all")->capture_default_str();
    app.add_option("--nsim", cfg.nsim, "Monte Carlo replicates")->capture_default_str();
    app.add_option("--seed", cfg.seed, "Monte Carlo seed")->capture_default_str();
    app.add_option("--conf-level", cfg.conf_level, "Confidence level gamma")->capture_default_str();
    app.add_option("--round-eps", cfg.round_eps, "Widen confidence bounds by this rounding epsilon")->capture_default_str();
    app.add_option("--bound", bound, "upper | lower | interval (confidence mode)")->capture_default_str();
    app.add_option("--mode", mode, "steel | pairwise | confidence | quality_harness")->capture_default_str();
    app.add_option("--nodes", cfg.nodes, "Quadrature nodes (multiple of 16)")->capture_default_str();
    app.add_option("--output", output, "json | text")->capture_default_str();
    app.add_option("--epsilon", cfg.epsilon, "Tie-dominance tolerance for the diagnostics")->capture_default_str();
    app.add_option("--min-group-size", cfg.min_group_size, "Small-group warning floor")->capture_default_str();
    app.add_option("--exact-budget", cfg.exact_budget, "Maximum distinct splits for exact enumeration")->capture_default_str();
    app.add_option("--pre-round", pre_round, "Round data to this many decimals before ranking");
    app.add_flag("--plus-one", cfg.plus_one, "Report (count + 1) / (nsim + 1) for simulated p-values");
    app.add_flag("--continuity-correction", cfg.continuity_correction, "Half-unit continuity correction for asymptotic p-values");
    app.add_option("-o,--out", out_path, "Write the report to this file instead of stdout");
    app.add_option("--csv", csv_path, "Write the quality-harness table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cout << serialize(error_json(Error(ErrorKind::parameter, e.what())));
        return exit_code(ErrorKind::parameter);
    }

    try {
        cfg.format = parse_input_format(format);
        cfg.alternative = parse_alternative(alternative);
        cfg.method = parse_method(method);
        cfg.mode = parse_mode(mode);
        cfg.bound = parse_bound_direction(bound);
        if (output == "json")
            cfg.output = OutputFormat::json;
        else if (output == "text")
            cfg.output = OutputFormat::text;
        else
            fail(ErrorKind::parameter, "unknown output '" + output + "'");
        if (pre_round >= 0) cfg.pre_round = pre_round;

        const Json report = run(cfg);
        const std::string rendered = cfg.output == OutputFormat::json ? serialize(report) : render_text(report);
        if (out_path.empty()) {
            std::cout << rendered;
        } else {
            std::ofstream out(out_path);
            if (!out) fail(ErrorKind::data, "cannot write '" + out_path + "'");
            out << rendered;
        }
        if (!csv_path.empty() && report.contains("harness")) {
            std::ofstream csv(csv_path);
            if (!csv) fail(ErrorKind::data, "cannot write '" + csv_path + "'");
            csv << "threshold,p_sim,p_asym_adj,p_asym_unadj\n";
            for (const auto& row : report.at("harness").at("rows"))
                csv << row[0].dump() << ',' << row[1].dump() << ',' << row[2].dump() << ',' << row[3].dump() << '\n';
        }
    } catch (const Error& e) {
        std::cout << serialize(error_json(e));
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cout << serialize(Json{{"error", {{"kind", "internal"}, {"message", e.what()}}}});
        return 1;
    }
    return 0;
}
