#pragma once

// Two-view embedding datasets: synthetic generation, TRCO/TRCL/CSV files,
// stratified splits and seeded batch iteration.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "trico/numerics.hpp"

namespace trico {

inline constexpr int kUnlabeled = -1;

enum class Split : std::uint8_t { labeled_train, unlabeled, validation, test };

std::string_view split_name(Split s) noexcept;

struct TwoViewDataset {
    DenseMatrix view1;
    DenseMatrix view2;
    std::vector<int> labels;       // observed labels, kUnlabeled when hidden
    std::vector<int> true_labels;  // private, for impurity metrics only; kUnlabeled when unknown
    std::vector<Split> split;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::vector<std::size_t> indices_of(Split s) const;
    /// Throws InvalidInput when row counts disagree or a validation row is unlabeled.
    void validate() const;

    friend bool operator==(const TwoViewDataset&, const TwoViewDataset&) = default;
};

struct SyntheticSpec {
    std::size_t n = 3040;
    std::size_t classes = 4;
    std::size_t d1 = 16;
    std::size_t d2 = 16;
    double view_noise = 0.6;
    double label_noise = 0.0;
    std::uint64_t seed = 0;
};

/// Class means per view drawn independently on the unit sphere; rows are
/// mean + N(0, view_noise^2 I) with independent noise across views. Labels
/// are balanced (row i has class i mod C before shuffling by split). A
/// label_noise fraction of observed labels is flipped to a different class;
/// true_labels keeps the clean ones. Features are rounded to float32 so the
/// dataset survives a TRCO round trip exactly. Throws InvalidInput when n < classes.
TwoViewDataset gen_synthetic_two_view(const SyntheticSpec& spec);

/// Stratified split of the labeled rows: a test_fraction goes to test, then
/// labeled_fraction of the rest stays labeled (the remainder is hidden and
/// becomes unlabeled), then validation_fraction of those labeled rows (at least
/// one per class) becomes validation. Already-unlabeled rows stay unlabeled.
TwoViewDataset make_splits(const TwoViewDataset& ds, double labeled_fraction, double validation_fraction,
                           std::uint64_t seed, double test_fraction = 0.0);

// TRCO: "TRCO", u16 version=1, u32 n, u32 d, n*d float32, all little-endian.
void write_embedding_binary(const std::filesystem::path& path, const DenseMatrix& m);
DenseMatrix read_embedding_binary(const std::filesystem::path& path);
// TRCL: "TRCL", u16 version=1, u32 n, n int32.
void write_labels_binary(const std::filesystem::path& path, std::span<const int> labels);
std::vector<int> read_labels_binary(const std::filesystem::path& path);

void write_embedding_csv(const std::filesystem::path& path, const DenseMatrix& m);
DenseMatrix read_embedding_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, std::span<const int> labels);
std::vector<int> read_labels_csv(const std::filesystem::path& path);

/// Reads both views and labels (".csv" extension selects CSV, anything else
/// binary). Rows labeled -1 are unlabeled; the rest start as labeled-train.
/// classes = 0 infers max label + 1.
TwoViewDataset load_embedding_file(const std::filesystem::path& view1, const std::filesystem::path& view2,
                                   const std::filesystem::path& labels, std::size_t classes = 0);

struct BatchPlan {
    std::size_t labeled_batch = 64;
    std::size_t unlabeled_ratio = 7;
    std::uint64_t seed = 0;
    bool class_balanced = false;

    std::size_t unlabeled_batch() const noexcept { return labeled_batch * unlabeled_ratio; }
};

struct Batch {
    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
    const std::vector<std::size_t>* validation = nullptr;
    std::size_t epoch = 0;
    std::size_t step_in_epoch = 0;
};

/// Epoch = one pass over a fresh permutation of the unlabeled rows (the last
/// batch may be short). Labeled rows are drawn from a stream of per-round
/// permutations, so a labeled batch may repeat rows when the pool is small.
class BatchIterator {
public:
    BatchIterator(const TwoViewDataset& ds, BatchPlan plan);

    Batch next();
    std::size_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
    const std::vector<std::size_t>& validation() const noexcept { return validation_; }

private:
    void refill_unlabeled();
    std::size_t next_labeled();

    const TwoViewDataset* ds_;
    BatchPlan plan_;
    std::vector<std::size_t> labeled_pool_, unlabeled_pool_, validation_;
    std::vector<int> labeled_classes_;
    std::vector<std::size_t> unlabeled_order_, labeled_order_;
    std::size_t unlabeled_cursor_ = 0, labeled_cursor_ = 0, labeled_round_ = 0;
    std::size_t epoch_ = 0, step_in_epoch_ = 0, steps_per_epoch_ = 0;
};

}  // namespace trico
