#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using icdn::testing::read_file;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

Result run(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "cli_output.txt";
    const std::string cmd = std::string("\"") + ICDN_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_file(log);
    return r;
}

const std::string kSynth = std::string(ICDN_CONFIG_DIR) + "/synth.conf";
const std::string kFast = std::string(ICDN_CONFIG_DIR) + "/fast.conf";

class Cli : public ::testing::Test {
protected:
    void SetUp() override { dir = icdn::testing::scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name()); }
    void TearDown() override { fs::remove_all(dir); }
    std::string p(const std::string& name) const { return (dir / name).string(); }
    fs::path dir;
};

}  // namespace

TEST_F(Cli, TrainWithoutDataIsUsageError) {
    const auto r = run("train --out " + p("m.json"), dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("--data"), std::string::npos);
}

TEST_F(Cli, UnknownFlagListsValidFlags) {
    const auto r = run("synth --config " + kSynth + " --seed 1 --bogus 3", dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("--bogus"), std::string::npos);
    EXPECT_NE(r.output.find("--seed"), std::string::npos);
}

TEST_F(Cli, MissingSubcommandIsUsageError) { EXPECT_EQ(run("", dir).code, 1); }

TEST_F(Cli, SynthTwiceIsByteIdentical) {
    ASSERT_EQ(run("synth --config " + kSynth + " --seed 7 --out " + p("a"), dir).code, 0);
    ASSERT_EQ(run("synth --config " + kSynth + " --seed 7 --out " + p("b"), dir).code, 0);
    EXPECT_EQ(read_file(p("a/raw_panel.csv")), read_file(p("b/raw_panel.csv")));
    EXPECT_EQ(read_file(p("a/ground_truth.json")), read_file(p("b/ground_truth.json")));
    EXPECT_TRUE(fs::exists(p("a/synth.manifest.json")));
}

TEST_F(Cli, DataErrorExitsTwo) {
    std::ofstream(p("bad.csv")) << "store_code,upc_code\nS1,U1\n";
    EXPECT_EQ(run("preprocess --input " + p("bad.csv") + " --out " + p("prep"), dir).code, 2);
    EXPECT_EQ(run("preprocess --input " + p("missing.csv") + " --out " + p("prep"), dir).code, 2);
    std::ofstream(p("bad.conf")) << "n_products = 0\n";
    EXPECT_EQ(run("synth --config " + p("bad.conf") + " --seed 1 --out " + p("s"), dir).code, 2);
}

TEST_F(Cli, EndToEndPipeline) {
    ASSERT_EQ(run("synth --config " + kSynth + " --seed 3 --out " + p("raw"), dir).code, 0);
    ASSERT_EQ(run("preprocess --input " + p("raw") + " --out " + p("prep"), dir).code, 0);
    for (const char* f : {"cleaned_panel.csv", "feature_panel.csv", "preprocess_report.json", "preprocess.manifest.json"})
        EXPECT_TRUE(fs::exists(dir / "prep" / f)) << f;

    ASSERT_EQ(run("train --config " + kFast + " --data " + p("prep") + " --seed 3 --out " + p("m.json"), dir).code, 0);
    EXPECT_TRUE(fs::exists(p("m.json.manifest.json")));
    EXPECT_TRUE(fs::exists(p("m.json.log.jsonl")));

    const auto v = run("verify --ckpt " + p("m.json") + " --points 32", dir);
    ASSERT_EQ(v.code, 0) << v.output;
    const auto vj = nlohmann::json::parse(v.output.substr(v.output.find('{')));
    EXPECT_TRUE(vj.contains("max_closure_residual"));
    EXPECT_LT(vj["max_closure_residual"].get<double>(), 1e-4);

    ASSERT_EQ(run("elasticity --ckpt " + p("m.json") + " --data " + p("prep") + " --out " + p("e.csv"), dir).code, 0);
    EXPECT_TRUE(fs::exists(p("e.csv.manifest.json")));

    const auto b = run("benchmark --data " + p("prep") + " --folds 2 --bootstrap-reps 3 --ckpt " + p("m.json") + " --out " + p("bench"), dir);
    ASSERT_EQ(b.code, 0) << b.output;
    for (const char* f : {"benchmark_fits.csv", "benchmark_elasticities.csv", "benchmark_metrics.csv"})
        EXPECT_TRUE(fs::exists(dir / "bench" / f)) << f;

    const auto c = run("compare --icdn " + p("e.csv") + " --benchmark " + p("bench/benchmark_elasticities.csv") +
                           " --out " + p("diag.json"),
                       dir);
    ASSERT_EQ(c.code, 0) << c.output;
    const auto dj = nlohmann::json::parse(read_file(p("diag.json")));
    EXPECT_TRUE(dj.contains("matched_keys"));
}

TEST_F(Cli, EvaluateWritesArtifacts) {
    ASSERT_EQ(run("synth --config " + kSynth + " --seed 4 --out " + p("raw"), dir).code, 0);
    ASSERT_EQ(run("preprocess --input " + p("raw") + " --out " + p("prep"), dir).code, 0);
    std::ofstream(p("tiny.conf")) << "hidden = 8\nattention_dim = 4\nembedding_dim = 2\nepochs_phase0 = 1\nepochs_phase1 = 1\n";
    const auto r = run("evaluate --config " + p("tiny.conf") + " --data " + p("prep") +
                           " --folds 2 --seeds 0 --bootstrap-reps 2 --out " + p("eval"),
                       dir);
    ASSERT_EQ(r.code, 0) << r.output;
    for (const char* f : {"evaluation.json", "icdn_elasticities.csv", "icdn_metrics.csv", "evaluate.manifest.json"})
        EXPECT_TRUE(fs::exists(dir / "eval" / f)) << f;
}
