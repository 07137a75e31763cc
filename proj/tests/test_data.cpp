#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "trico/data.hpp"
#include "trico/error.hpp"

using namespace trico;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("trico_test_data_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary);
    f << bytes;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.n = 400;
    s.classes = 4;
    s.d1 = 6;
    s.d2 = 5;
    s.seed = 11;
    return s;
}

}  // namespace

TEST(Synthetic, ZeroNoiseGivesClassMeans) {
    SyntheticSpec s = small_spec();
    s.view_noise = 0.0;
    const auto ds = gen_synthetic_two_view(s);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::size_t ref = static_cast<std::size_t>(ds.true_labels[i]);  // row `ref` has the same class
        for (std::size_t j = 0; j < s.d1; ++j) EXPECT_EQ(ds.view1(i, j), ds.view1(ref, j));
        for (std::size_t j = 0; j < s.d2; ++j) EXPECT_EQ(ds.view2(i, j), ds.view2(ref, j));
    }
    // means lie on the unit sphere (up to float rounding)
    for (std::size_t c = 0; c < s.classes; ++c) {
        double n1 = 0.0;
        for (double v : ds.view1.row(c)) n1 += v * v;
        EXPECT_NEAR(std::sqrt(n1), 1.0, 1e-6);
    }
}

TEST(Synthetic, CrossViewNoiseUncorrelated) {
    SyntheticSpec s;
    s.n = 10000;
    s.classes = 4;
    s.d1 = 3;
    s.d2 = 3;
    s.view_noise = 1.0;
    s.seed = 5;
    const auto ds = gen_synthetic_two_view(s);
    // residuals from the class means (zero-noise dataset with the same seed)
    SyntheticSpec clean = s;
    clean.view_noise = 0.0;
    const auto means = gen_synthetic_two_view(clean);
    const double n = static_cast<double>(s.n);
    for (std::size_t a = 0; a < s.d1; ++a)
        for (std::size_t b = 0; b < s.d2; ++b) {
            double sxy = 0.0, sxx = 0.0, syy = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) {
                const double r1 = ds.view1(i, a) - means.view1(i, a);
                const double r2 = ds.view2(i, b) - means.view2(i, b);
                sxy += r1 * r2;
                sxx += r1 * r1;
                syy += r2 * r2;
            }
            const double corr = sxy / std::sqrt(sxx * syy);
            EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(n)) << a << "," << b;
        }
}

TEST(Synthetic, SameSeedIsBitIdentical) {
    EXPECT_EQ(gen_synthetic_two_view(small_spec()), gen_synthetic_two_view(small_spec()));
    SyntheticSpec other = small_spec();
    other.seed = 12;
    EXPECT_NE(gen_synthetic_two_view(small_spec()).view1, gen_synthetic_two_view(other).view1);
}

TEST(Synthetic, LabelNoiseFlipsRequestedFraction) {
    SyntheticSpec s = small_spec();
    s.label_noise = 0.25;
    const auto ds = gen_synthetic_two_view(s);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) flipped += ds.labels[i] != ds.true_labels[i];
    EXPECT_EQ(flipped, 100u);
}

TEST(Synthetic, RejectsBadInput) {
    SyntheticSpec s = small_spec();
    s.n = 3;
    EXPECT_THROW(gen_synthetic_two_view(s), InvalidInput);
    s = small_spec();
    s.classes = 1;
    EXPECT_THROW(gen_synthetic_two_view(s), InvalidInput);
    s = small_spec();
    s.view_noise = -1.0;
    EXPECT_THROW(gen_synthetic_two_view(s), InvalidInput);
}

TEST(Formats, HandcraftedTwoRowBinary) {
    const auto dir = temp_dir("hand");
    // little-endian TRCO, 2x2: 1.0, -2.5, 0.125, 3.0
    std::string b = "TRCO";
    b += std::string("\x01\x00", 2);
    b += std::string("\x02\x00\x00\x00", 4);
    b += std::string("\x02\x00\x00\x00", 4);
    b += std::string("\x00\x00\x80\x3f", 4);
    b += std::string("\x00\x00\x20\xc0", 4);
    b += std::string("\x00\x00\x00\x3e", 4);
    b += std::string("\x00\x00\x40\x40", 4);
    write_bytes(dir / "m.trco", b);
    const DenseMatrix m = read_embedding_binary(dir / "m.trco");
    ASSERT_EQ(m.rows(), 2u);
    ASSERT_EQ(m.cols(), 2u);
    EXPECT_EQ(m(0, 0), 1.0);
    EXPECT_EQ(m(0, 1), -2.5);
    EXPECT_EQ(m(1, 0), 0.125);
    EXPECT_EQ(m(1, 1), 3.0);
    write_embedding_binary(dir / "again.trco", m);
    EXPECT_EQ(read_bytes(dir / "again.trco"), b);
}

TEST(Formats, LabelRoundTripAndLayout) {
    const auto dir = temp_dir("labels");
    const std::vector<int> y{3, -1, 0};
    write_labels_binary(dir / "y.trcl", y);
    const std::string bytes = read_bytes(dir / "y.trcl");
    ASSERT_EQ(bytes.size(), 4u + 2 + 4 + 12);
    EXPECT_EQ(bytes.substr(0, 4), "TRCL");
    EXPECT_EQ(bytes.substr(14, 4), std::string("\xff\xff\xff\xff", 4));
    EXPECT_EQ(read_labels_binary(dir / "y.trcl"), y);
}

TEST(Formats, ErrorsNameFileAndOffset) {
    const auto dir = temp_dir("errors");
    const DenseMatrix m(3, 2, 0.5);
    write_embedding_binary(dir / "ok.trco", m);
    std::string good = read_bytes(dir / "ok.trco");

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    write_bytes(dir / "magic.trco", bad_magic);
    try {
        read_embedding_binary(dir / "magic.trco");
        FAIL() << "no throw";
    } catch (const FormatError& e) {
        EXPECT_NE(e.file().find("magic.trco"), std::string::npos);
        EXPECT_EQ(e.offset(), 0u);
    }

    std::string bad_version = good;
    bad_version[4] = 2;
    write_bytes(dir / "version.trco", bad_version);
    try {
        read_embedding_binary(dir / "version.trco");
        FAIL() << "no throw";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }

    write_bytes(dir / "short.trco", good.substr(0, good.size() - 3));
    try {
        read_embedding_binary(dir / "short.trco");
        FAIL() << "no throw";
    } catch (const FormatError& e) {
        EXPECT_GE(e.offset(), 14u);
        EXPECT_NE(std::string(e.what()).find("short.trco"), std::string::npos);
    }

    write_labels_binary(dir / "y.trcl", std::vector<int>{0, 1});
    EXPECT_THROW(load_embedding_file(dir / "ok.trco", dir / "ok.trco", dir / "y.trcl"), FormatError);
}

TEST(Formats, CsvAndBinaryGiveSameDataset) {
    const auto dir = temp_dir("cross");
    const auto ds = gen_synthetic_two_view(small_spec());
    write_embedding_binary(dir / "v1.trco", ds.view1);
    write_embedding_binary(dir / "v2.trco", ds.view2);
    write_labels_binary(dir / "y.trcl", ds.labels);
    write_embedding_csv(dir / "v1.csv", ds.view1);
    write_embedding_csv(dir / "v2.csv", ds.view2);
    write_labels_csv(dir / "y.csv", ds.labels);
    const auto bin = load_embedding_file(dir / "v1.trco", dir / "v2.trco", dir / "y.trcl");
    const auto csv = load_embedding_file(dir / "v1.csv", dir / "v2.csv", dir / "y.csv");
    EXPECT_EQ(bin, csv);
    EXPECT_EQ(bin.view1, ds.view1);
    EXPECT_EQ(bin.view2, ds.view2);
    EXPECT_EQ(bin.labels, ds.labels);
}

TEST(Formats, CsvHeaderChecked) {
    const auto dir = temp_dir("csvhdr");
    write_bytes(dir / "bad.csv", "a,b\n1,2\n");
    EXPECT_THROW(read_embedding_csv(dir / "bad.csv"), FormatError);
    write_bytes(dir / "ragged.csv", "f0,f1\n1,2\n3\n");
    EXPECT_THROW(read_embedding_csv(dir / "ragged.csv"), FormatError);
}

TEST(Formats, AllMinusOneIsUnlabeled) {
    const auto dir = temp_dir("allu");
    const DenseMatrix m(4, 2, 1.0);
    write_embedding_binary(dir / "v.trco", m);
    write_labels_binary(dir / "y.trcl", std::vector<int>(4, -1));
    const auto ds = load_embedding_file(dir / "v.trco", dir / "v.trco", dir / "y.trcl", 3);
    EXPECT_EQ(ds.indices_of(Split::unlabeled).size(), 4u);
    EXPECT_TRUE(ds.indices_of(Split::labeled_train).empty());
}

TEST(Splits, FullLabeledFractionLeavesNoUnlabeled) {
    const auto ds = make_splits(gen_synthetic_two_view(small_spec()), 1.0, 0.1, 3);
    EXPECT_TRUE(ds.indices_of(Split::unlabeled).empty());
    EXPECT_EQ(ds.indices_of(Split::validation).size(), 40u);
}

TEST(Splits, StratifiedCountsAndNoOverlap) {
    SyntheticSpec s = small_spec();
    s.n = 1003;  // uneven classes: 251, 251, 251, 250
    const auto raw = gen_synthetic_two_view(s);
    const auto ds = make_splits(raw, 0.2, 0.1, 9, 0.1);
    ds.validate();
    std::vector<std::size_t> per_class_total(4), per_class_val(4);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ++per_class_total[static_cast<std::size_t>(raw.labels[i])];
        if (ds.split[i] == Split::validation) ++per_class_val[static_cast<std::size_t>(ds.labels[i])];
        if (ds.split[i] == Split::unlabeled) EXPECT_EQ(ds.labels[i], kUnlabeled);
        else EXPECT_EQ(ds.labels[i], raw.labels[i]);
    }
    const double total_val = static_cast<double>(ds.indices_of(Split::validation).size());
    for (std::size_t c = 0; c < 4; ++c) {
        const double proportional = total_val * static_cast<double>(per_class_total[c]) / 1003.0;
        EXPECT_LE(std::abs(static_cast<double>(per_class_val[c]) - proportional), 1.0) << c;
        EXPECT_GE(per_class_val[c], 1u);
    }
    EXPECT_NEAR(static_cast<double>(ds.indices_of(Split::test).size()), 100.0, 4.0);
}

TEST(Splits, DeterministicUnderSeed) {
    const auto raw = gen_synthetic_two_view(small_spec());
    EXPECT_EQ(make_splits(raw, 0.3, 0.1, 4), make_splits(raw, 0.3, 0.1, 4));
    EXPECT_NE(make_splits(raw, 0.3, 0.1, 4).split, make_splits(raw, 0.3, 0.1, 5).split);
}

TEST(Splits, ClassWithoutLabeledRowsRejected) {
    auto raw = gen_synthetic_two_view(small_spec());
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (raw.labels[i] == 2) raw.labels[i] = kUnlabeled;
    EXPECT_THROW(make_splits(raw, 0.5, 0.1, 0), InvalidInput);
    EXPECT_THROW(make_splits(gen_synthetic_two_view(small_spec()), 0.0, 0.1, 0), InvalidInput);
}

TEST(Batches, UnlabeledBatchIsMuTimesLabeled) {
    SyntheticSpec s = small_spec();
    s.n = 3000;
    const auto ds = make_splits(gen_synthetic_two_view(s), 0.05, 0.1, 0);
    BatchIterator it(ds, BatchPlan{64, 7, 1});
    const Batch b = it.next();
    EXPECT_EQ(b.labeled.size(), 64u);
    EXPECT_EQ(b.unlabeled.size(), 448u);
}

TEST(Batches, EpochIsPermutationOfUnlabeled) {
    const auto ds = make_splits(gen_synthetic_two_view(small_spec()), 0.1, 0.1, 0);
    BatchIterator it(ds, BatchPlan{8, 3, 2});
    const auto pool = ds.indices_of(Split::unlabeled);
    const auto val_rows = ds.indices_of(Split::validation);
    const std::set<std::size_t> validation(val_rows.begin(), val_rows.end());
    std::vector<std::size_t> first_order;
    for (std::size_t epoch = 0; epoch < 3; ++epoch) {
        std::multiset<std::size_t> seen;
        std::vector<std::size_t> order;
        for (std::size_t k = 0; k < it.steps_per_epoch(); ++k) {
            const Batch b = it.next();
            EXPECT_EQ(b.epoch, epoch);
            for (std::size_t i : b.unlabeled) {
                seen.insert(i);
                order.push_back(i);
                EXPECT_FALSE(validation.count(i));
            }
            for (std::size_t i : b.labeled) {
                EXPECT_EQ(ds.split[i], Split::labeled_train);
                EXPECT_FALSE(validation.count(i));
            }
        }
        EXPECT_EQ(seen.size(), pool.size());
        EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), pool.size());
        if (epoch == 0) first_order = order;
        else EXPECT_NE(order, first_order);  // reshuffled
    }
}

TEST(Batches, FixedSeedSameSequence) {
    const auto ds = make_splits(gen_synthetic_two_view(small_spec()), 0.1, 0.1, 0);
    for (bool balanced : {false, true}) {
        BatchIterator a(ds, BatchPlan{8, 3, 7, balanced}), b(ds, BatchPlan{8, 3, 7, balanced});
        for (int k = 0; k < 40; ++k) {
            const Batch x = a.next(), y = b.next();
            EXPECT_EQ(x.labeled, y.labeled);
            EXPECT_EQ(x.unlabeled, y.unlabeled);
        }
    }
}

TEST(Batches, ClassBalancedRoundRobin) {
    const auto ds = make_splits(gen_synthetic_two_view(small_spec()), 0.2, 0.1, 0);
    BatchIterator it(ds, BatchPlan{4, 1, 3, true});
    const Batch b = it.next();
    std::set<int> classes;
    for (std::size_t i : b.labeled) classes.insert(ds.labels[i]);
    EXPECT_EQ(classes.size(), 4u);
}
