#include <gtest/gtest.h>
#include <z2ent/pipelines.hpp>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace z2ent;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("z2ent_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

int cli(const std::string& args) {
    int s = std::system((std::string(Z2ENT_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

json small_config(const fs::path& out) {
    return {{"geometry", {{{"kind", "cut_torus"}, {"nx_a", 2}, {"nx_b", 2}, {"ny", 2}}}},
            {"epsilon", {0.1, 0.3}},
            {"output", out.string()},
            {"quench", {{"times", {{"start", 0}, {"stop", 2}, {"step", 0.5}}}}}};
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(); }

} // namespace

TEST(Config, DefaultsRoundTrip) {
    RunConfig c;
    auto j = to_json(c);
    auto d = parse_config(j);
    EXPECT_EQ(to_json(d), j);
    EXPECT_EQ(config_hash(d), config_hash(c));
}

TEST(Config, RejectsUnknownKeysAtEveryLevel) {
    EXPECT_THROW(parse_config({{"geomtry", json::array()}}), ConfigError);
    EXPECT_THROW(parse_config({{"quench", {{"krylov_dim", 3}}}}), ConfigError);
    EXPECT_THROW(parse_config({{"analysis", {{"scaling", {{"tref", 1}}}}}}), ConfigError);
    EXPECT_THROW(parse_config({{"analysis", {{"ansatz", {{"boundary", true}}}}}}), ConfigError);
    EXPECT_THROW(parse_config({{"fault_injection", {{"corrupt", true}}}}), ConfigError);
    EXPECT_THROW(parse_config({{"geometry", {{{"kind", "cut_torus"}, {"nx_a", 2}, {"nx_b", 2}, {"ny", 2}, {"nz", 1}}}}}), ConfigError);
}

TEST(Config, RejectsBadValues) {
    EXPECT_THROW(parse_config({{"threads", 0}}), ConfigError);
    EXPECT_THROW(parse_config({{"seed", "abc"}}), ConfigError);
    EXPECT_THROW(parse_config({{"epsilon", -0.1}}), ConfigError);
    EXPECT_THROW(parse_config({{"quench", {{"initial_state", "ground"}}}}), ConfigError);
    EXPECT_THROW(parse_config({{"geometry", {{{"kind", "sphere"}, {"nx_a", 2}, {"ny", 2}}}}}), ConfigError);
}

TEST(Config, CouplingsAndGrids) {
    auto c = parse_config({{"epsilon", {{"start", 0.1}, {"stop", 0.3}, {"step", 0.1}}}, {"quench", {{"eps_initial", "inf"}}}});
    ASSERT_EQ(c.epsilons.size(), 3u);
    EXPECT_NEAR(c.epsilons[2], 0.3, 1e-12);
    EXPECT_TRUE(std::isinf(c.quench.eps_initial));
    EXPECT_EQ(to_json(c)["quench"]["eps_initial"], "inf");
}

TEST(Config, HashIgnoresOutputAndThreads) {
    RunConfig a, b;
    b.output = "elsewhere";
    b.threads = 4;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 2;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Pipelines, OrderedMapIsDeterministic) {
    auto r = ordered_map<int>(50, 4, [](std::size_t k) { return int(k * k); });
    for(std::size_t k = 0; k < r.size(); ++k) EXPECT_EQ(r[k], int(k * k));
    EXPECT_THROW(ordered_map<int>(10, 3, [](std::size_t k) -> int { if(k == 7) throw std::runtime_error("x"); return 0; }), std::runtime_error);
}

TEST(Pipelines, VerifyDefaultPassesAndCorruptionFails) {
    RunConfig c;
    c.output = scratch("verify").string();
    EXPECT_EQ(run_verify(c), exit_code::ok);
    auto m = json::parse(slurp(fs::path(c.output) / "metadata.json"));
    EXPECT_TRUE(m["results"]["all_ok"].get<bool>());
    EXPECT_EQ(m["config_hash"], config_hash(c));
    c.corrupt_dual_table = true;
    EXPECT_EQ(run_verify(c), exit_code::numeric);
    m = json::parse(slurp(fs::path(c.output) / "metadata.json"));
    EXPECT_FALSE(m["results"]["all_ok"].get<bool>());
    EXPECT_FALSE(m["results"]["geometries"][0]["violations"].empty());
}

TEST(Pipelines, EmptyGeometryIsAUsageError) {
    RunConfig c;
    c.geometries.clear();
    c.output = scratch("empty").string();
    EXPECT_THROW(run_verify(c), ConfigError);
    EXPECT_THROW(run_scan(c), ConfigError);
    EXPECT_THROW(run_quench(c), ConfigError);
}

TEST(Pipelines, BudgetPreflight) {
    RunConfig c = parse_config(small_config(scratch("budget")));
    c.budget_gb = 1e-6;
    EXPECT_THROW(run_ground_es(c), BudgetExceeded);
    EXPECT_THROW(run_quench(c), BudgetExceeded);
}

TEST(Pipelines, QuenchWritesSelfDescribingOutputs) {
    auto dir = scratch("quench");
    RunConfig c = parse_config(small_config(dir));
    ASSERT_EQ(run_quench(c), exit_code::ok);
    for(auto f : {"timeseries.csv", "spectra.csv", "thermal.csv", "metadata.json", "quench.gp"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
    auto ts = slurp(dir / "timeseries.csv");
    EXPECT_NE(ts.find("config_hash=" + config_hash(c)), std::string::npos);
    // the spectrum offsets index the rows of the archive
    auto snaps = read_spectra_archive((dir / "spectra.csv").string());
    EXPECT_EQ(snaps.size(), c.quench.times.size());
    for(auto& s : snaps) EXPECT_NEAR(std::accumulate(s.probs.begin(), s.probs.end(), 0.0), 1.0, 1e-10);
}

TEST(Cli, ExitCodes) {
    auto dir = scratch("cli");
    write(dir / "good.json", small_config(dir / "out"));
    auto bad = small_config(dir / "out");
    bad["analysis"] = {{"unfolding", 3}};
    write(dir / "bad.json", bad);
    auto none = small_config(dir / "out");
    none["geometry"] = json::array();
    write(dir / "none.json", none);
    auto corrupt = small_config(dir / "out");
    corrupt["fault_injection"] = {{"corrupt_dual_table", true}};
    write(dir / "corrupt.json", corrupt);

    EXPECT_EQ(cli("verify -c " + (dir / "good.json").string()), 0);
    EXPECT_EQ(cli("verify -c " + (dir / "corrupt.json").string()), 2);
    EXPECT_EQ(cli("verify -c " + (dir / "bad.json").string()), 1);
    EXPECT_EQ(cli("verify -c " + (dir / "none.json").string()), 1);
    EXPECT_EQ(cli("no-such-command"), 1);
    EXPECT_EQ(cli("verify --threads 0"), 1);
    EXPECT_EQ(cli("quench -c " + (dir / "good.json").string() + " --budget-gb 1e-7"), 3);
    EXPECT_EQ(cli("scaling-fit --archive " + (dir / "missing.csv").string()), 1);
    EXPECT_EQ(cli("--help"), 0);
}

TEST(Cli, RepeatedRunsAreBitIdentical) {
    auto dir = scratch("repeat");
    write(dir / "c.json", small_config(dir / "unused"));
    for(auto* sub : {"a", "b"})
        ASSERT_EQ(cli("ground-es -c " + (dir / "c.json").string() + " --seed 5 --threads 2 --out " + (dir / sub).string()), 0);
    for(auto f : {"ground_es.csv", "es_levels.csv"}) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    auto a = json::parse(slurp(dir / "a" / "metadata.json")), b = json::parse(slurp(dir / "b" / "metadata.json"));
    a.erase("timestamp");
    b.erase("timestamp");
    a["config"].erase("output");
    b["config"].erase("output");
    EXPECT_EQ(a, b);
    EXPECT_EQ(a["seed"], 5);
}

TEST(Cli, ScalingFitReadsQuenchArchive) {
    auto dir = scratch("scaling");
    auto j = small_config(dir / "q");
    j["quench"]["eps_initial"] = "inf";
    j["quench"]["times"] = {{"start", 0}, {"stop", 6}, {"step", 1}};
    j["analysis"] = {{"scaling", {{"t_ref", 3}, {"t_tests", {4, 5, 6}}, {"n_lo", 2}, {"n_hi", 8}, {"t0", {0, 2, 0.5}}}}};
    write(dir / "c.json", j);
    ASSERT_EQ(cli("quench -c " + (dir / "c.json").string()), 0);
    ASSERT_EQ(cli("scaling-fit -c " + (dir / "c.json").string() + " --archive " + (dir / "q" / "spectra.csv").string() + " --out " +
                  (dir / "s").string()),
              0);
    // the standalone fit reproduces the in-run fit
    auto q = json::parse(slurp(dir / "q" / "metadata.json"))["results"]["scaling"];
    auto s = json::parse(slurp(dir / "s" / "metadata.json"))["results"]["scaling"];
    EXPECT_EQ(q["alpha"], s["alpha"]);
    EXPECT_EQ(q["beta"], s["beta"]);
    EXPECT_EQ(q["t0"], s["t0"]);
    EXPECT_TRUE(fs::exists(dir / "s" / "scaling_chi2.csv"));
}

TEST(Pipelines, GroundEsAtZeroCouplingIsFlat) {
    auto dir = scratch("flat");
    auto j = small_config(dir);
    j["epsilon"] = 0.0;
    ASSERT_EQ(run_ground_es(parse_config(j)), exit_code::ok);
    std::ifstream in(dir / "es_levels.csv");
    std::string line;
    std::vector<double> xi;
    while(std::getline(in, line)) {
        if(line.empty() || line[0] == '#' || line.rfind("geometry", 0) == 0) continue;
        std::stringstream ss(line);
        std::string cell;
        for(int k = 0; k < 4; ++k) std::getline(ss, cell, ',');
        xi.push_back(std::stod(cell));
    }
    ASSERT_FALSE(xi.empty());
    // every populated sector carries one level of equal weight
    EXPECT_EQ(xi.size(), 8u);
    for(double x : xi) EXPECT_NEAR(x, std::log(double(xi.size())), 1e-9);
}

TEST(Pipelines, ScanFindsCriticalCoupling) {
    auto dir = scratch("scan");
    auto j = small_config(dir);
    j["geometry"] = {{{"kind", "cut_torus"}, {"nx_a", 3}, {"nx_b", 3}, {"ny", 2}}};
    j["epsilon"] = {{"start", 0.1}, {"stop", 0.5}, {"step", 0.05}};
    j["threads"] = 2;
    ASSERT_EQ(run_scan(parse_config(j)), exit_code::ok);
    auto m = json::parse(slurp(dir / "metadata.json"));
    ASSERT_TRUE(m["results"]["critical"]["epsilon_c"].is_number()) << m["results"].dump();
    double ec = m["results"]["critical"]["epsilon_c"].get<double>();
    EXPECT_GT(ec, 0.2);
    EXPECT_LT(ec, 0.6);
    EXPECT_TRUE(fs::exists(dir / "critical.csv"));
}

TEST(Pipelines, EhFitWritesParameterTable) {
    auto dir = scratch("eh");
    auto j = small_config(dir);
    j["epsilon"] = {0.2, 0.4};
    ASSERT_EQ(run_eh_fit(parse_config(j)), exit_code::ok);
    auto m = json::parse(slurp(dir / "metadata.json"));
    ASSERT_EQ(m["results"]["points"].size(), 2u);
    for(auto& p : m["results"]["points"]) EXPECT_TRUE(p["converged"].get<bool>());
    EXPECT_TRUE(fs::exists(dir / "eh_params.csv"));
}
