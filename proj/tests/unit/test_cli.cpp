#include "reachcert/serialization.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;
using reachcert::read_file;

namespace {

const char* kSmallConfig = R"({"version": 1, "seed": 3, "layout": "v1", "horizon": 2,
 "grid": {"counts": [4, 4, 3, 3]},
 "certify": {"n_s": 10},
 "synthesis": {"n_s": 10, "actions_per_dim": 3, "nn": {"hidden": 4, "epochs": 1, "n_states": 50}},
 "learning": {"episodes": 1, "trajectories": 5, "max_horizon": 10, "hidden": [4], "policy_iters": 1,
              "hmc": {"n_samples": 10, "burn_in": 5}},
 "simulate": {"n_trajectories": 20}})";

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("reachcert_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        reachcert::write_file((dir / "small.json").string(), kSmallConfig);
    }
    void TearDown() override { fs::remove_all(dir); }

    int cli(const std::string& args) const {
        const std::string cmd = std::string("cd '") + dir.string() + "' && '" + REACHCERT_CLI + "' " + args +
                                " > out.log 2> err.log";
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
    std::string file(const std::string& name) const { return read_file((dir / name).string()); }
    std::string hash(const std::string& name) const {
        return reachcert::hex_digest(reachcert::digest(file(name)));
    }
};

} // namespace

TEST_F(Cli, FullPipeline) {
    ASSERT_EQ(cli("train-bnn -c small.json -o t"), 0) << file("err.log");
    for (const char* f : {"posterior.bin", "policy_learned.bin", "dataset.csv", "report.json"})
        EXPECT_TRUE(fs::exists(dir / "t" / f)) << f;
    ASSERT_EQ(cli("certify -c small.json -o c --posterior t/posterior.bin --policy t/policy_learned.bin"), 0)
        << file("err.log");
    for (const char* f : {"K_0.csv", "K_1.csv", "K_2.csv", "grid.json", "heatmap_K0.ppm", "report.json"})
        EXPECT_TRUE(fs::exists(dir / "c" / f)) << f;
    const auto rep = nlohmann::json::parse(file("c/report.json"));
    EXPECT_TRUE(rep.at("coverage").is_number());
    EXPECT_FALSE(rep.contains("runtime_seconds"));
    ASSERT_EQ(cli("synthesize -c small.json -o s --posterior t/posterior.bin"), 0) << file("err.log");
    EXPECT_TRUE(fs::exists(dir / "s" / "actions.csv"));
    ASSERT_EQ(cli("synthesize-nn -c small.json -o n --posterior t/posterior.bin"), 0) << file("err.log");
    ASSERT_EQ(cli("simulate -c small.json -o m --policy s/policy.bin"), 0) << file("err.log");
    EXPECT_TRUE(fs::exists(dir / "m" / "trajectories.csv"));
    ASSERT_EQ(cli("simulate -c small.json -o b --policy n/policy.bin --stepper bnn --posterior t/posterior.bin"), 0)
        << file("err.log");
    ASSERT_EQ(cli("certify -c small.json -o ct --timing --posterior t/posterior.bin --policy s/policy.bin"), 0);
    EXPECT_TRUE(nlohmann::json::parse(file("ct/report.json")).contains("runtime_seconds"));
}

TEST_F(Cli, OutputsAreReproducibleAcrossWorkerCounts) {
    ASSERT_EQ(cli("train-bnn -c small.json -o t"), 0);
    ASSERT_EQ(cli("train-bnn -c small.json -o t2 --workers 4"), 0);
    EXPECT_EQ(hash("t/posterior.bin"), hash("t2/posterior.bin"));
    EXPECT_EQ(hash("t/policy_learned.bin"), hash("t2/policy_learned.bin"));
    ASSERT_EQ(cli("synthesize -c small.json -o a --workers 1 --posterior t/posterior.bin"), 0);
    ASSERT_EQ(cli("synthesize -c small.json -o b --workers 4 --posterior t/posterior.bin"), 0);
    for (const char* f : {"policy.bin", "K_0.csv", "actions.csv", "report.json", "heatmap_K0.ppm"})
        EXPECT_EQ(hash(std::string("a/") + f), hash(std::string("b/") + f)) << f;
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(cli(""), 2);
    EXPECT_EQ(cli("bogus"), 2);
    EXPECT_EQ(cli("certify -c small.json --policy x.bin"), 2);                      // missing --posterior
    EXPECT_EQ(cli("certify -c small.json --posterior x.bin --policy y.bin"), 2);    // missing files
    EXPECT_EQ(cli("certify -c missing.json --posterior x.bin --policy y.bin"), 2);
    EXPECT_EQ(cli("train-bnn --inference mcmc"), 2);
    reachcert::write_file((dir / "bad.json").string(), R"({"certify": {"n_p": 1}})");
    EXPECT_EQ(cli("train-bnn -c bad.json -o t"), 2);
    reachcert::write_file((dir / "junk.bin").string(), "not a container");
    EXPECT_EQ(cli("simulate -c small.json --policy junk.bin"), 2);
    ASSERT_EQ(cli("train-bnn -c small.json -o t"), 0);
    EXPECT_EQ(cli("simulate -c small.json --policy t/policy_learned.bin -n 0"), 2);
    EXPECT_EQ(cli("simulate -c small.json --policy t/policy_learned.bin --stepper bnn"), 2);
    EXPECT_EQ(cli("--help"), 0);
}

TEST_F(Cli, NumericalFailureExitsWithOne) {
    std::string csv = "s0,s1,s2,s3,a0,a1,t0,t1,t2,t3\n";
    for (int i = 0; i < 5; ++i) csv += "0.5,0.5,0,0,0.1,0.1,nan,0.5,0,0\n";
    reachcert::write_file((dir / "nan.csv").string(), csv);
    EXPECT_EQ(cli("train-bnn -c small.json -o t --dataset nan.csv"), 1) << file("err.log");
}

TEST_F(Cli, TrainsFromDatasetFile) {
    std::string csv = "s0,s1,s2,s3,a0,a1,t0,t1,t2,t3\n";
    for (int i = 0; i < 10; ++i) {
        const double x = 0.1 * i;
        csv += std::to_string(x) + ",0.5,0,0,0.2,0.1," + std::to_string(x + 0.0049) + ",0.50245,0.014,0.007\n";
    }
    reachcert::write_file((dir / "data.csv").string(), csv);
    ASSERT_EQ(cli("train-bnn -c small.json -o t --dataset data.csv --inference vi"), 0) << file("err.log");
    EXPECT_TRUE(fs::exists(dir / "t" / "posterior.bin"));
    EXPECT_FALSE(fs::exists(dir / "t" / "policy_learned.bin"));
}
