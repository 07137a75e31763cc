#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "trico/cli.hpp"
#include "trico/model_io.hpp"

using namespace trico;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_command(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("trico_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

// a quick run: small synthetic set, two epochs
const std::vector<std::string> kSmall{"--data.n",   "700",    "--data.test", "200", "--train.epochs", "2",
                                      "--train.k", "3",      "--generator.steps", "2", "--eval.attack_steps", "2"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail = kSmall) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

}  // namespace

TEST(Cli, GradcheckPasses) {
    const Result r = run({"gradcheck", "--instances", "10"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("PASS student"), std::string::npos);
    EXPECT_NE(r.out.find("PASS meta"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, UnknownSubcommandExitsTwo) {
    const Result r = run({"frobnicate"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("unknown subcommand"), std::string::npos);
    EXPECT_EQ(run({}).code, 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
    EXPECT_EQ(run({"train", "--train.nonsense", "1"}).code, 2);
    EXPECT_EQ(run({"train", "--teacher.lambda_u", "0.8", "--teacher.lambda_adv=0.8"}).code, 2);
    EXPECT_EQ(run({"train", "--config", "/nonexistent/file.cfg"}).code, 2);
    EXPECT_EQ(run({"train", "stray"}).code, 2);
    const fs::path cfg = fresh("bad.cfg");
    std::ofstream(cfg) << "train.epochs = 2\nnot a line\n";
    const Result r = run({"train", "--config", cfg.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos);
}

TEST(Cli, MissingModelExitsOne) {
    const fs::path dir = fresh("nomodel");
    EXPECT_EQ(run(with({"eval", "--out", dir.string()})).code, 1);
}

TEST(Cli, TrainWritesArtifactsDeterministically) {
    const fs::path a = fresh("train_a"), b = fresh("train_b");
    ASSERT_EQ(run(with({"train", "--out", a.string()})).code, 0);
    for (const char* f : {"report.json", "curves.csv", "strategy_trace.csv", "model.trcm", "config.txt"})
        EXPECT_TRUE(fs::exists(a / f)) << f;
    const std::string first = slurp(a / "report.json");
    ASSERT_EQ(run(with({"train", "--out", a.string()})).code, 0);
    EXPECT_EQ(slurp(a / "report.json"), first);

    // another output directory only changes the echoed run.out
    ASSERT_EQ(run(with({"train", "--out", b.string()})).code, 0);
    auto ja = nlohmann::json::parse(first), jb = nlohmann::json::parse(slurp(b / "report.json"));
    ja["config"].erase("run.out");
    jb["config"].erase("run.out");
    EXPECT_EQ(ja, jb);
    EXPECT_EQ(slurp(a / "model.trcm"), slurp(b / "model.trcm"));

    // eval on the saved model reproduces the final metrics of training
    const Result ev = run(with({"eval", "--out", a.string()}));
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto je = nlohmann::json::parse(slurp(a / "eval_report.json"));
    EXPECT_EQ(je["final"], ja["final"]);

    // the saved config replays the run
    const fs::path c = fresh("train_c");
    ASSERT_EQ(run({"train", "--config", (a / "config.txt").string(), "--out", c.string()}).code, 0);
    EXPECT_EQ(slurp(a / "model.trcm"), slurp(c / "model.trcm"));
}

TEST(Cli, SynthDataThenTrainMatchesInMemoryRun) {
    for (const std::string format : {"binary", "csv"}) {
        const fs::path data = fresh("synth_" + format), mem = fresh("mem_" + format), file = fresh("file_" + format);
        ASSERT_EQ(run(with({"synth-data", "--format", format, "--out", data.string()})).code, 0);
        const std::string ext = format == "csv" ? ".csv" : ".trco", lext = format == "csv" ? ".csv" : ".trcl";
        ASSERT_EQ(run(with({"train", "--out", mem.string()})).code, 0);
        const Result r = run(with({"train", "--out", file.string(), "--data.source", "files", "--data.view1",
                                   (data / ("view1" + ext)).string(), "--data.view2", (data / ("view2" + ext)).string(),
                                   "--data.labels", (data / ("labels" + lext)).string(), "--data.true_labels",
                                   (data / ("true_labels" + lext)).string()}));
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_EQ(slurp(mem / "model.trcm"), slurp(file / "model.trcm")) << format;
        const auto jm = nlohmann::json::parse(slurp(mem / "report.json"));
        const auto jf = nlohmann::json::parse(slurp(file / "report.json"));
        EXPECT_EQ(jm["seeds"], jf["seeds"]) << format;
    }
}

TEST(Cli, MultiSeedWritesSummary) {
    const fs::path dir = fresh("multi");
    ASSERT_EQ(run(with({"train", "--out", dir.string(), "--run.multi_seed", "true", "--run.seeds", "3,4"})).code, 0);
    const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
    ASSERT_EQ(j["seeds"].size(), 2u);
    EXPECT_EQ(j["summary"]["accuracy"]["n"], 2);
    const double a = j["seeds"][0]["final"]["accuracy"], b = j["seeds"][1]["final"]["accuracy"];
    EXPECT_DOUBLE_EQ(j["summary"]["accuracy"]["mean"].get<double>(), (a + b) / 2.0);
    EXPECT_TRUE(fs::exists(dir / "model_seed4.trcm"));
}

TEST(Cli, CostPrintsRatio) {
    const Result r = run(with({"cost"}, {"--data.n", "700", "--data.test", "200", "--train.epochs", "1"}));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("ratio"), std::string::npos);
    const Result sup = run(with({"cost", "--teacher.lambda_u", "0", "--teacher.lambda_adv", "0", "--teacher.eta_t", "0"},
                                {"--data.n", "700", "--data.test", "200", "--train.epochs", "1"}));
    ASSERT_EQ(sup.code, 0) << sup.err;
    EXPECT_NE(sup.out.find("ratio 1\n"), std::string::npos) << sup.out;
}

TEST(Cli, EquilibriumWritesVerdict) {
    const fs::path dir = fresh("eq");
    ASSERT_EQ(run(with({"train", "--out", dir.string()})).code, 0);
    // shrink the game for a unit test: one extra student seed, tiny probe, one-epoch retraining
    const Result r = run({"equilibrium", "--run", dir.string(), "--game.budget_epochs", "1", "--game.probe_size", "16",
                          "--game.student_seeds", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(dir / "equilibrium_report.json"));
    EXPECT_TRUE(j.contains("verdict"));
    EXPECT_EQ(j["probe_size"], 16);
    EXPECT_EQ(j["grids"]["teacher"].size(), 45u);
    EXPECT_GE(j["stackelberg_residual"]["students"].get<double>(), 0.0);
}
