#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "avgann");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = avgann::cli::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("avgann_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void generate(std::size_t n = 300, std::size_t d = 8) {
        const auto r = run({"gen", "--n", std::to_string(n), "--d", std::to_string(d), "--p", "4", "--seed", "3",
                            "--queries", "20", "--out-data", path("data.bin"), "--out-queries", path("q.bin"),
                            "--out-truth", path("truth.csv")});
        ASSERT_EQ(r.code, 0) << r.err;
    }

    fs::path dir_;
};

} // namespace

TEST_F(CliTest, GenBuildEvalSmoke) {
    generate();
    const auto b = run({"build", "--data", path("data.bin"), "--seed", "1", "--out-index", path("idx.bin")});
    ASSERT_EQ(b.code, 0) << b.err;
    const auto e = run({"eval", "--index", path("idx.bin"), "--data", path("data.bin"), "--queries", path("q.bin"),
                        "--truth", path("truth.csv"), "--out", path("report.json")});
    ASSERT_EQ(e.code, 0) << e.err;
    const auto rep = nlohmann::json::parse(slurp(path("report.json")));
    EXPECT_TRUE(rep.at("all_within_c").get<bool>());
    EXPECT_TRUE(rep.at("oracle_consistent").get<bool>());
    EXPECT_EQ(rep.at("n_queries").get<int>(), 20);
    EXPECT_TRUE(rep.contains("success_rate"));
    EXPECT_TRUE(rep.contains("mean_query_us"));
    EXPECT_TRUE(rep.contains("build_ms"));

    const auto q = run({"query", "--index", path("idx.bin"), "--queries", path("q.bin"), "--out", path("ans.csv")});
    ASSERT_EQ(q.code, 0) << q.err;
    const auto csv = slurp(path("ans.csv"));
    EXPECT_EQ(csv.rfind("query_id,found,nn_id,distance\r\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
}

TEST_F(CliTest, RescaledBuildKeepsAnswersConsistent) {
    generate(100, 4);
    const auto b = run({"build", "--data", path("data.bin"), "--r", "2", "--out-index", path("idx.bin")});
    ASSERT_EQ(b.code, 0) << b.err;
    const auto e = run({"eval", "--index", path("idx.bin"), "--data", path("data.bin"), "--queries", path("q.bin"),
                        "--truth", path("truth.csv"), "--out", path("report.json")});
    EXPECT_EQ(e.code, 0) << e.err;
}

TEST_F(CliTest, MissingRequiredFlag) {
    const auto r = run({"build", "--data", path("data.bin")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--out-index"), std::string::npos) << r.err;
}

TEST_F(CliTest, NoSubcommand) { EXPECT_EQ(run({}).code, 1); }

TEST_F(CliTest, InvalidValues) {
    const auto r = run({"gen", "--eps", "0", "--out-data", path("a"), "--out-queries", path("b"), "--out-truth",
                        path("c")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--eps"), std::string::npos) << r.err;
    EXPECT_EQ(run({"lsh-curve", "--width", "-1", "--out", path("c.csv")}).code, 1);
    EXPECT_EQ(run({"verify-embed", "--data", path("x"), "--center", "bogus"}).code, 1);
}

TEST_F(CliTest, MissingInputFile) {
    const auto r = run({"build", "--data", path("nope.bin"), "--out-index", path("idx.bin")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("nope.bin"), std::string::npos) << r.err;
}

TEST_F(CliTest, DimensionMismatchIsValidationError) {
    generate(100, 4);
    ASSERT_EQ(run({"build", "--data", path("data.bin"), "--out-index", path("idx.bin")}).code, 0);
    const auto other = run({"gen", "--n", "10", "--d", "5", "--queries", "3", "--out-data", path("d5.bin"),
                            "--out-queries", path("q5.bin"), "--out-truth", path("t5.csv")});
    ASSERT_EQ(other.code, 0) << other.err;
    const auto q = run({"query", "--index", path("idx.bin"), "--queries", path("q5.bin"), "--out", path("a.csv")});
    EXPECT_EQ(q.code, 1);
    EXPECT_NE(q.err.find("dimension mismatch"), std::string::npos) << q.err;
    const auto e = run({"eval", "--index", path("idx.bin"), "--data", path("data.bin"), "--queries", path("q5.bin"),
                        "--truth", path("t5.csv"), "--out", path("r.json")});
    EXPECT_EQ(e.code, 1);
}

TEST_F(CliTest, CorruptIndexIsValidationError) {
    std::ofstream(path("idx.bin"), std::ios::binary) << "AEIXgarbage";
    generate(50, 4);
    const auto q = run({"query", "--index", path("idx.bin"), "--queries", path("q.bin"), "--out", path("a.csv")});
    EXPECT_EQ(q.code, 1);
}

TEST_F(CliTest, VerifyEmbed) {
    generate(60, 4);
    for (const char* center : {"scan", "zero", "mean", "median"}) {
        const auto r = run({"verify-embed", "--data", path("data.bin"), "--pairs", "500", "--center", center, "--out",
                            path("v.json")});
        ASSERT_EQ(r.code, 0) << r.err;
        const auto j = nlohmann::json::parse(slurp(path("v.json")));
        EXPECT_TRUE(j.at("passed_lipschitz").get<bool>()) << center;
        EXPECT_LE(j.at("max_lip_ratio").get<double>(), 5.0 * (1.0 + 1e-9));
    }
}

TEST_F(CliTest, ConjectureScan) {
    generate(60, 4);
    const auto r = run({"conjecture-scan", "--data", path("data.bin"), "--out", path("scan.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = slurp(path("scan.csv"));
    EXPECT_EQ(csv.rfind("candidate,label,C\r\n", 0), 0u);
    EXPECT_NE(csv.find(",mean,"), std::string::npos);
    EXPECT_NE(csv.find(",median,"), std::string::npos);
    EXPECT_NE(r.out.find("best center"), std::string::npos);
}

TEST_F(CliTest, LshCurve) {
    const auto r = run({"lsh-curve", "--width", "2", "--smin", "0.5", "--smax", "4", "--steps", "5", "--trials",
                        "20000", "--out", path("curve.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(slurp(path("curve.csv")));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "W,s,p_analytic,p_montecarlo,n_trials\r");
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        ++rows;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) {
            v.push_back(std::stod(f));
        }
        ASSERT_EQ(v.size(), 5u);
        EXPECT_NEAR(v[2], v[3], 0.02) << line;
    }
    EXPECT_EQ(rows, 5);
}
