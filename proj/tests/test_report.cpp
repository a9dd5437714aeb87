#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "steelrank/report.hpp"

using namespace steelrank;

namespace {

const std::string iq_path = STEELRANK_FIXTURES "/steel1959_iq.csv";

Dataset parse(const std::string& text, InputFormat format) {
    std::istringstream in(text);
    Dataset d;
    read_samples(in, format, d);
    return d;
}

struct Captured {
    int status = 0;
    std::string out;
};

Captured run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + STEELRANK_CLI + " " + args + " 2>/dev/null";
    Captured c;
    FILE* pipe = popen(cmd.c_str(), "r");
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) c.out.append(buf.data(), n);
    const int raw = pclose(pipe);
    c.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return c;
}

std::string temp_file(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << content;
    return path.string();
}

}  // namespace

TEST(Io, CsvLongWithHeaderAndComments) {
    const auto d = parse("# comment\ngroup,value\na,1\nb,2\na,3.5\n", InputFormat::csv_long);
    EXPECT_EQ(d.labels, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(d.samples[0], (std::vector<double>{1, 3.5}));
}

TEST(Io, CsvWideRagged) {
    const auto d = parse("x,y,z\n1,2,3\n4,,6\n7\n", InputFormat::csv_wide);
    EXPECT_EQ(d.samples[0], (std::vector<double>{1, 4, 7}));
    EXPECT_EQ(d.samples[1], (std::vector<double>{2}));
    EXPECT_EQ(d.samples[2], (std::vector<double>{3, 6}));
}

TEST(Io, Whitespace) {
    const auto d = parse("ctl 1 2 3\ntrt 4  5\nctl 6\n", InputFormat::whitespace);
    EXPECT_EQ(d.samples[0], (std::vector<double>{1, 2, 3, 6}));
    EXPECT_EQ(d.samples[1], (std::vector<double>{4, 5}));
}

TEST(Io, ErrorsCarryLineNumbers) {
    try {
        parse("g,v\na,1\na,x\n", InputFormat::csv_long);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::data);
        EXPECT_STREQ(e.what(), "line 3: non-numeric value 'x'");
    }
    EXPECT_THROW(parse("a,1,2\n", InputFormat::csv_long), Error);
    EXPECT_THROW(parse("a,b\n1,2,3\n", InputFormat::csv_wide), Error);
}

TEST(Io, ControlSelection) {
    auto d = parse("a,1\nb,2\nc,3\n", InputFormat::csv_long);
    d.move_to_front("c");
    EXPECT_EQ(d.labels, (std::vector<std::string>{"c", "a", "b"}));
    EXPECT_THROW(d.move_to_front("zz"), Error);
}

TEST(Run, IqExample) {
    RunConfig cfg;
    cfg.inputs = {iq_path};
    cfg.alternative = Alternative::less;
    cfg.nsim = 100000;
    const Json r = run(cfg);
    EXPECT_NEAR(r["observation"]["s_min"].get<double>(), -1.7713, 5e-5);
    EXPECT_NEAR(r["p_values"]["asymptotic"]["estimate"].get<double>(), 0.0946, 5e-4);
    const auto& sim = r["p_values"]["simulated"];
    EXPECT_NEAR(sim["estimate"].get<double>(), 0.105, 3.0 * std::sqrt(0.105 * 0.895 / 1e5));
    EXPECT_EQ(r["observation"]["w_star"], Json::parse("[7.0, 17.0, 12.5]"));
    EXPECT_EQ(r["schema_version"], 1);
}

TEST(Run, SmallDataGetsExactPValue) {
    RunConfig cfg;
    Dataset d;
    d.labels = {"c", "t"};
    d.samples = {{1, 2, 3}, {4, 5, 6}};
    const Json r = run(cfg, d);
    EXPECT_DOUBLE_EQ(r["p_values"]["exact"]["estimate"].get<double>(), 0.05);
    EXPECT_FALSE(r["p_values"].contains("simulated"));
    cfg.method = Method::exact;
    cfg.exact_budget = 2;
    try {
        run(cfg, d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::budget);
        EXPECT_NE(std::string(e.what()).find("--method simulated"), std::string::npos);
    }
}

TEST(Run, IdenticalSingleValueGroups) {
    Dataset d;
    d.labels = {"a", "b"};
    d.samples = {{3, 3, 3, 3, 3}, {3, 3, 3, 3, 3}};
    RunConfig cfg;
    cfg.alternative = Alternative::two_sided;
    const Json r = run(cfg, d);
    for (const auto& [k, p] : r["p_values"].items()) EXPECT_EQ(p["estimate"].get<double>(), 1.0) << k;
    EXPECT_FALSE(r["warnings"].empty());

    cfg.mode = Mode::confidence;
    const Json c = run(cfg, d);
    EXPECT_EQ(c["confidence"]["lower"]["bound_conservative"][0].get<double>(), 0.0);
    EXPECT_EQ(c["confidence"]["upper"]["bound_conservative"][0].get<double>(), 0.0);
    bool ties = false;
    for (const auto& w : c["warnings"]) ties = ties || w.get<std::string>().rfind("ties present", 0) == 0;
    EXPECT_TRUE(ties);
}

TEST(Run, WarningsSurface) {
    RunConfig cfg;
    cfg.conf_level = 1.0 - 1e-12;
    cfg.mode = Mode::confidence;
    Dataset d;
    d.labels = {"a", "b"};
    d.samples = {{1, 2, 3}, {4, 5}};
    const Json r = run(cfg, d);
    std::vector<std::string> w = r["warnings"];
    EXPECT_NE(std::find(w.begin(), w.end(), "conservative target unreachable"), w.end());
    EXPECT_NE(std::find(w.begin(), w.end(), "small group: n0 = 3 < 5"), w.end());
}

TEST(Run, HarnessWithoutTiesHasIdenticalColumns) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    Dataset d;
    d.labels = {"a", "b", "c"};
    d.samples.assign(3, std::vector<double>(30));
    for (auto& s : d.samples)
        for (auto& v : s) v = g(rng);
    for (auto alt : {Alternative::greater, Alternative::less, Alternative::two_sided}) {
        const auto s = rank_samples(d.samples);
        const auto thresholds = harness_thresholds(alt);
        const auto rows = quality_harness(s, alt, thresholds, {2000, 1});
        for (const auto& row : rows) EXPECT_NEAR(row.p_asym_adj, row.p_asym_unadj, 1e-12);
    }
    RunConfig cfg;
    cfg.mode = Mode::quality_harness;
    cfg.nsim = 2000;
    const Json r = run(cfg, d);
    EXPECT_EQ(r["harness"]["columns"], Json::parse(R"(["threshold","p_sim","p_asym_adj","p_asym_unadj"])"));
    EXPECT_EQ(r["harness"]["rows"].size(), harness_thresholds(Alternative::greater).size());
    const auto csv = harness_csv(quality_harness(rank_samples(d.samples), Alternative::greater, std::vector<double>{1.0}, {100, 1}));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "threshold,p_sim,p_asym_adj,p_asym_unadj");
}

TEST(Run, ParameterValidation) {
    RunConfig cfg;
    Dataset d;
    d.labels = {"a", "b"};
    d.samples = {{1, 2}, {3, 4}};
    cfg.nsim = 0;
    EXPECT_THROW(run(cfg, d), Error);
    cfg = {};
    cfg.nodes = 100;
    EXPECT_THROW(run(cfg, d), Error);
    cfg = {};
    cfg.conf_level = 1.5;
    EXPECT_THROW(run(cfg, d), Error);
    d.samples.pop_back();
    d.labels.pop_back();
    EXPECT_THROW(run(RunConfig{}, d), Error);
}

TEST(Serialize, RoundTripIsByteIdentical) {
    RunConfig cfg;
    cfg.inputs = {iq_path};
    cfg.alternative = Alternative::two_sided;
    cfg.nsim = 5000;
    for (auto mode : {Mode::steel, Mode::pairwise, Mode::confidence}) {
        cfg.mode = mode;
        const std::string text = serialize(run(cfg));
        EXPECT_EQ(serialize(Json::parse(text)), text);
    }
}

TEST(Serialize, TenSignificantDigits) {
    EXPECT_EQ(detail::number(1.0 / 3.0).dump(), "0.3333333333");
    EXPECT_EQ(detail::number(18.0).dump(), "18.0");
}

TEST(Cli, IqReportAndDeterminism) {
    const auto a = run_cli("-i " + iq_path + " --alternative less --nsim 20000 --seed 3", "STEELRANK_THREADS=1");
    const auto b = run_cli("-i " + iq_path + " --alternative less --nsim 20000 --seed 3", "STEELRANK_THREADS=8");
    EXPECT_EQ(a.status, 0);
    EXPECT_EQ(a.out, b.out);
    const Json r = Json::parse(a.out);
    EXPECT_NEAR(r["observation"]["value"].get<double>(), -1.7713, 5e-5);
    EXPECT_FALSE(r["config"].contains("threads"));
}

TEST(Cli, ErrorsAreMachineReadable) {
    const auto missing = run_cli("-i /nonexistent/file.csv");
    EXPECT_EQ(missing.status, 3);
    EXPECT_EQ(Json::parse(missing.out)["error"]["kind"], "data");

    const auto bad_group = run_cli("-i " + iq_path + " --control nobody");
    EXPECT_EQ(bad_group.status, 3);
    EXPECT_EQ(Json::parse(bad_group.out)["error"]["message"], "unknown group 'nobody'");

    const auto bad_param = run_cli("-i " + iq_path + " --conf-level 2");
    EXPECT_EQ(bad_param.status, 2);
    EXPECT_EQ(Json::parse(bad_param.out)["error"]["kind"], "parameter");

    const auto budget = run_cli("-i " + iq_path + " --method exact");
    EXPECT_EQ(budget.status, 4);

    const auto parse_error = temp_file("steelrank_bad.csv", "a,1\nb,oops\n");
    const auto bad_line = run_cli("-i " + parse_error);
    EXPECT_EQ(bad_line.status, 3);
    EXPECT_EQ(Json::parse(bad_line.out)["error"]["message"], "line 2: non-numeric value 'oops'");

    EXPECT_EQ(run_cli("--no-such-flag").status, 2);
}

TEST(Cli, HarnessCsvAndTextOutput) {
    const auto csv_path = (std::filesystem::temp_directory_path() / "steelrank_harness.csv").string();
    const auto r = run_cli("-i " + iq_path + " --mode quality_harness --nsim 2000 --csv " + csv_path);
    EXPECT_EQ(r.status, 0);
    std::ifstream in(csv_path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "threshold,p_sim,p_asym_adj,p_asym_unadj");

    const auto text = run_cli("-i " + iq_path + " --output text --nsim 2000");
    EXPECT_EQ(text.status, 0);
    EXPECT_NE(text.out.find("s_max"), std::string::npos);
}
