#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "trico/config.hpp"
#include "trico/error.hpp"

using namespace trico;

namespace {

std::size_t error_line(const std::string& text, const std::vector<std::pair<std::string, std::string>>& ov = {}) {
    try {
        parse_config(text, ov);
    } catch (const ConfigError& e) {
        return e.line();
    }
    ADD_FAILURE() << "no ConfigError for:\n" << text;
    return 999;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
    const RunConfig c = parse_config("");
    EXPECT_EQ(c.train.mc_passes, 5u);
    EXPECT_EQ(c.train.perturb.epsilon, 1.0);
    EXPECT_EQ(c.train.unlabeled_ratio, 7u);
    EXPECT_EQ(c.train.labeled_batch, 64u);
    EXPECT_EQ(c.train.eta_student, 0.03);
    EXPECT_EQ(c.train.eta_teacher, 0.01);
    EXPECT_EQ(c.train.teacher_init, (StrategyTriple{0.05, 0.5, 0.5}));
    EXPECT_EQ(c.train.filter, FilterKind::mi);
    EXPECT_EQ(c.data.validation_fraction, 0.1);
    EXPECT_EQ(c.bins, 5u);
    EXPECT_FALSE(c.train.stability_stop);
}

TEST(Config, LinesCommentsAndOverrides) {
    const RunConfig c = parse_config(
        "# a comment\n"
        "\n"
        "train.k = 3   # trailing comment\n"
        "generator.epsilon=0.25\n"
        "train.k = 4\n"
        "filter.kind = confidence\n"
        "run.seeds = 4,5,6\n",
        {{"train.epochs", "7"}, {"generator.epsilon", "0.5"}});
    EXPECT_EQ(c.train.mc_passes, 4u);  // later line wins
    EXPECT_EQ(c.train.perturb.epsilon, 0.5);  // override wins
    EXPECT_EQ(c.train.epochs, 7u);
    EXPECT_EQ(c.train.filter, FilterKind::confidence);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5, 6}));
}

TEST(Config, ErrorsCiteTheLine) {
    EXPECT_EQ(error_line("train.k = 5\nthis is not a key value line\n"), 2u);
    EXPECT_EQ(error_line("\n\ntrain.bogus = 1\n"), 3u);
    EXPECT_EQ(error_line("train.epochs = -3\n"), 1u);
    EXPECT_EQ(error_line("train.epochs = 3x\n"), 1u);
    EXPECT_EQ(error_line("train.dropout = 1.5\n"), 1u);
    EXPECT_EQ(error_line("filter.kind = fancy\n"), 1u);
    EXPECT_EQ(error_line("generator.enabled = maybe\n"), 1u);
    EXPECT_EQ(error_line("train.k =\n"), 1u);
    // overrides report line 0
    EXPECT_EQ(error_line("", {{"train.nope", "1"}}), 0u);
}

TEST(Config, CrossKeyConstraints) {
    // lambda_u + lambda_adv > 1, cited at the later of the two lines
    EXPECT_EQ(error_line("teacher.lambda_u = 0.7\n# pad\nteacher.lambda_adv = 0.6\n"), 3u);
    EXPECT_EQ(error_line("train.k = 1\n"), 1u);
    EXPECT_EQ(error_line("data.source = files\n"), 1u);
    EXPECT_EQ(error_line("data.n = 500\ndata.test = 480\n"), 2u);
    EXPECT_NO_THROW(parse_config("train.k = 1\nfilter.kind = none\n"));
    EXPECT_NO_THROW(parse_config("teacher.lambda_u = 0.5\nteacher.lambda_adv = 0.5\n"));
}

TEST(Config, EchoRoundTrips) {
    const RunConfig c = parse_config(
        "train.epochs = 3\nteacher.tau = 0.123456789\ngenerator.epsilon = 0.1\nfilter.direction = below\n"
        "train.norm_bound = 2.5\nrun.multi_seed = true\ngame.student_seeds = 9\nteacher.ordering = after_step\n");
    const std::string text = config_text(c);
    const RunConfig back = parse_config(text);
    EXPECT_EQ(config_text(back), text);
    EXPECT_EQ(config_echo(back), config_echo(c));
    EXPECT_EQ(back.train.teacher_init.tau_mi, 0.123456789);
    EXPECT_EQ(back.train.norm_bound, 2.5);
    EXPECT_EQ(back.train.direction, FilterDirection::below);
    EXPECT_EQ(back.train.meta_ordering, MetaOrdering::after_step);
    // every key appears exactly once
    std::set<std::string> keys;
    for (const auto& [k, v] : config_echo(c)) EXPECT_TRUE(keys.insert(k).second) << k;
}

TEST(Config, MissingFileIsConfigError) {
    EXPECT_THROW(load_config("/nonexistent/trico.cfg"), ConfigError);
    const auto path = std::filesystem::temp_directory_path() / "trico_test_config.cfg";
    std::ofstream(path) << "train.epochs = 2\n";
    EXPECT_EQ(load_config(path).train.epochs, 2u);
}

TEST(Config, DatasetMatchesDataSection) {
    const RunConfig c = parse_config("data.n = 600\ndata.labeled = 40\ndata.test = 100\n");
    const TwoViewDataset ds = build_dataset(c.data);
    EXPECT_EQ(ds.size(), 600u);
    EXPECT_EQ(ds.indices_of(Split::labeled_train).size() + ds.indices_of(Split::validation).size(), 40u);
    EXPECT_EQ(ds.indices_of(Split::validation).size(), 4u);
    EXPECT_EQ(ds.indices_of(Split::test).size(), 100u);
    EXPECT_EQ(ds.indices_of(Split::unlabeled).size(), 460u);
    EXPECT_EQ(build_dataset(c.data), ds);
}
