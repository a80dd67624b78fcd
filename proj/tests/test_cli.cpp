#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" KGSIM_CLI_PATH "' " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        root = fs::temp_directory_path() / ("kgsim_cli_" + std::string(info->name()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    void TearDown() override { fs::remove_all(root); }
    std::string out(const std::string& name) const { return "--out-dir '" + (root / name).string() + "'"; }
    fs::path root;
};

}  // namespace

TEST_F(Cli, GroundStateSummary) {
    const auto r = run_cli("groundstate --p 3 --omega critical " + out("gs"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto m = json::parse(slurp(root / "gs" / "manifest.json"));
    EXPECT_NEAR(m["results"]["omega"].get<double>(), 0.7071068, 1e-6);
    EXPECT_NEAR(m["results"]["l2sq"].get<double>(), 2.8284271, 1e-6);
    EXPECT_NEAR(m["results"]["charge"].get<double>(), -2.0, 1e-8);
    EXPECT_EQ(m["tool"], "kgsim 0.1.0");
    EXPECT_EQ(m["config"]["omega"], "critical");
    EXPECT_EQ(m["status"], "ok");
    EXPECT_EQ(m["content_hash"].get<std::string>().size(), 40u);
    const auto profile = csv_rows(root / "gs" / "profile.csv");
    ASSERT_EQ(profile.size(), 1025u);
    EXPECT_EQ(profile[0], (std::vector<std::string>{"x", "phi", "dphi_domega"}));
    EXPECT_TRUE(fs::exists(root / "gs" / "diagnostics.csv"));
    for (const auto& e : fs::directory_iterator(root / "gs")) EXPECT_NE(e.path().extension(), ".tmp");
}

TEST_F(Cli, SpectrumLowestEigenvalues) {
    const auto r = run_cli("spectrum --p 3 --omega critical --k 6 " + out("sp"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = csv_rows(root / "sp" / "eigenvalues.csv");
    ASSERT_EQ(rows.size(), 7u);
    EXPECT_NEAR(std::stod(rows[1][1]), -1.2247, 2e-3);
    int zeros = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) zeros += std::abs(std::stod(rows[i][1])) < 1e-5;
    EXPECT_EQ(zeros, 2);
    const auto m = json::parse(slurp(root / "sp" / "manifest.json"));
    EXPECT_EQ(m["results"]["n_negative"], 1);
    EXPECT_EQ(m["results"]["n_near_zero"], 2);
    EXPECT_GT(m["results"]["coercivity_margin"].get<double>(), 0.0);
}

TEST_F(Cli, InvalidExponentWritesNothing) {
    const auto r = run_cli("groundstate --p 6 " + out("bad"));
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_FALSE(fs::exists(root / "bad"));
    EXPECT_EQ(run_cli("groundstate --p abc " + out("bad")).code, 2);
    EXPECT_EQ(run_cli("instability --a 0 " + out("bad")).code, 2);
    EXPECT_EQ(run_cli("nosuchcommand").code, 2);
    EXPECT_FALSE(fs::exists(root / "bad"));
}

TEST_F(Cli, ConfigFileWithFlagOverrides) {
    std::ofstream(root / "run.cfg") << "# ground state at p = 2\np = 2\nomega = 0.3\nL = 80\n";
    const auto r = run_cli("groundstate --config '" + (root / "run.cfg").string() + "' --omega 0.4 " + out("cfg"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto m = json::parse(slurp(root / "cfg" / "manifest.json"));
    EXPECT_EQ(m["config"]["p"], "2");
    EXPECT_EQ(m["config"]["omega"], "0.4");
    EXPECT_EQ(m["config"]["L"], "80");
    EXPECT_NEAR(m["results"]["omega"].get<double>(), 0.4, 0.0);

    std::ofstream(root / "bad.cfg") << "p = 2\nwidth = 3\n";
    EXPECT_EQ(run_cli("groundstate --config '" + (root / "bad.cfg").string() + "' " + out("x")).code, 2);
    EXPECT_FALSE(fs::exists(root / "x"));
}

TEST_F(Cli, DefaultOutputRootFromEnvironment) {
    const auto r = run_cli("groundstate --p 3", "KGSIM_OUT_DIR='" + (root / "env").string() + "'");
    ASSERT_EQ(r.code, 0) << r.out;
    ASSERT_TRUE(fs::exists(root / "env"));
    int dirs = 0;
    for (const auto& e : fs::directory_iterator(root / "env")) {
        ++dirs;
        EXPECT_EQ(e.path().filename().string().rfind("groundstate-", 0), 0u);
        EXPECT_TRUE(fs::exists(e.path() / "manifest.json"));
    }
    EXPECT_EQ(dirs, 1);
}

TEST_F(Cli, EvolveIsDeterministic) {
    const std::string args = "evolve --p 3 --a 0.01 --t-end 1 --dt 0.01 --n 512 --L 80 ";
    ASSERT_EQ(run_cli(args + out("e1")).code, 0);
    ASSERT_EQ(run_cli(args + out("e2")).code, 0);
    const auto t1 = slurp(root / "e1" / "trajectory.csv");
    EXPECT_EQ(t1, slurp(root / "e2" / "trajectory.csv"));
    const auto rows = csv_rows(root / "e1" / "trajectory.csv");
    EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "Q", "P", "E", "orbit_distance", "sup_u"}));
    EXPECT_EQ(rows.size(), 12u);
    EXPECT_EQ(t1.find('\r'), std::string::npos);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", std::stod(rows[2][3]));
    EXPECT_EQ(rows[2][3], buf);
}

TEST_F(Cli, EvolveBlowUpExitsThreeWithOutputs) {
    const auto r = run_cli("evolve --p 3 --a 0.1 --t-end 30 --dt 0.005 --record-every 100 " + out("blow"));
    EXPECT_EQ(r.code, 3) << r.out;
    const auto m = json::parse(slurp(root / "blow" / "manifest.json"));
    EXPECT_EQ(m["status"], "blown_up");
    EXPECT_EQ(m["results"]["run_status"], "blown_up");
    EXPECT_TRUE(fs::exists(root / "blow" / "trajectory.csv"));
}

TEST_F(Cli, InstabilityReportAndTimeSeries) {
    const auto r = run_cli("instability --p 3 --a 0.01 --gnuplot true " + out("inst"));
    ASSERT_TRUE(r.code == 0 || r.code == 3) << r.out;
    const auto rep = json::parse(slurp(root / "inst" / "report.json"));
    EXPECT_EQ(rep["status"], "INSTABILITY_OBSERVED");
    EXPECT_TRUE(rep["t_star"].is_number());
    EXPECT_TRUE(rep["min_slope"].is_number());
    EXPECT_EQ(rep["config_hash"].get<std::string>().size(), 40u);
    const auto rows = csv_rows(root / "inst" / "timeseries.csv");
    ASSERT_GT(rows.size(), 3u);
    const std::vector<std::string> head{"t", "theta", "y", "lambda", "xi_h1l2", "eta_minus_i_omega_xi_l2",
                                        "F1", "F2", "F3", "exit_flag"};
    for (const auto& h : head) EXPECT_NE(std::find(rows[0].begin(), rows[0].end(), h), rows[0].end()) << h;
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].size(), rows[0].size());
    EXPECT_TRUE(fs::exists(root / "inst" / "timeseries.gp"));
    const auto m = json::parse(slurp(root / "inst" / "manifest.json"));
    for (const char* k : {"omega_c", "l2sq", "energy", "charge", "t_star", "min_slope"})
        EXPECT_TRUE(m["results"].contains(k)) << k;
}

TEST_F(Cli, EmptySweepWritesHeaderOnly) {
    const auto r = run_cli("sweep --p 3 --omega-ratio 1 --a '' " + out("empty"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = csv_rows(root / "empty" / "summary.csv");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0][0], "index");
}

TEST_F(Cli, SweepRowsInConfigOrder) {
    const auto r = run_cli("sweep --p 3 --omega-ratio 1 --a 0.005,0.01,0.02 --jobs 3 " + out("sw"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = csv_rows(root / "sw" / "summary.csv");
    ASSERT_EQ(rows.size(), 4u);
    const std::vector<double> as{0.005, 0.01, 0.02};
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i][0], std::to_string(i - 1));
        EXPECT_DOUBLE_EQ(std::stod(rows[i][4]), as[i - 1]);
        EXPECT_EQ(rows[i][5], "INSTABILITY_OBSERVED");
        EXPECT_TRUE(std::isfinite(std::stod(rows[i][6])));
        EXPECT_TRUE(fs::exists(root / "sw" / ("run_000" + std::to_string(i - 1)) / "timeseries.csv"));
    }
}

TEST_F(Cli, SweepAboveCriticalFrequencyStays) {
    const double ratio = 0.9 / std::sqrt(0.5);
    char arg[64];
    std::snprintf(arg, sizeof arg, "%.17g", ratio);
    const auto r = run_cli(std::string("sweep --p 3 --omega-ratio ") + arg + " --a 0.01 " + out("stable"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = csv_rows(root / "stable" / "summary.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1][5], "STAYED_NEAR_ORBIT");
}
