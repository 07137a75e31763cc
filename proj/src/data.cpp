#include "trico/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "trico/error.hpp"
#include "binio.hpp"
#include "trico/rng.hpp"

namespace trico {

std::string_view split_name(Split s) noexcept {
    switch (s) {
        case Split::labeled_train: return "labeled-train";
        case Split::unlabeled: return "unlabeled";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

std::vector<std::size_t> TwoViewDataset::indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

void TwoViewDataset::validate() const {
    const std::size_t n = labels.size();
    if (view1.rows() != n || view2.rows() != n || split.size() != n || true_labels.size() != n)
        throw InvalidInput("TwoViewDataset: row counts disagree");
    if (classes < 2) throw InvalidInput("TwoViewDataset: need at least 2 classes");
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < kUnlabeled || labels[i] >= static_cast<int>(classes))
            throw InvalidInput("TwoViewDataset: label out of range at row " + std::to_string(i));
        if ((split[i] == Split::validation || split[i] == Split::labeled_train || split[i] == Split::test) &&
            labels[i] == kUnlabeled)
            throw InvalidInput("TwoViewDataset: labeled split row " + std::to_string(i) + " has no label");
    }
}

namespace {

template <class T>
void shuffle_with(std::vector<T>& v, RngStream rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(v[i - 1], v[j]);
    }
}

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

TwoViewDataset gen_synthetic_two_view(const SyntheticSpec& spec) {
    if (spec.classes < 2) throw InvalidInput("gen_synthetic_two_view: need at least 2 classes");
    if (spec.n < spec.classes) throw InvalidInput("gen_synthetic_two_view: n < classes");
    if (spec.d1 == 0 || spec.d2 == 0) throw InvalidInput("gen_synthetic_two_view: zero view dimension");
    if (!(spec.view_noise >= 0.0) || !(spec.label_noise >= 0.0) || spec.label_noise > 1.0)
        throw InvalidInput("gen_synthetic_two_view: noise levels must be non-negative");

    auto sphere_means = [&](std::size_t d, std::uint64_t tag) {
        std::mt19937_64 gen(derive_seed(spec.seed, {tag}));
        std::normal_distribution<double> normal(0.0, 1.0);
        DenseMatrix means(spec.classes, d);
        for (std::size_t c = 0; c < spec.classes; ++c) {
            double norm = 0.0;
            while (norm < 1e-12) {
                for (double& v : means.row(c)) v = normal(gen);
                norm = 0.0;
                for (double v : means.row(c)) norm += v * v;
                norm = std::sqrt(norm);
            }
            for (double& v : means.row(c)) v /= norm;
        }
        return means;
    };
    const DenseMatrix mean1 = sphere_means(spec.d1, 1);
    const DenseMatrix mean2 = sphere_means(spec.d2, 2);

    TwoViewDataset ds;
    ds.classes = spec.classes;
    ds.view1 = DenseMatrix(spec.n, spec.d1);
    ds.view2 = DenseMatrix(spec.n, spec.d2);
    ds.labels.resize(spec.n);
    ds.true_labels.resize(spec.n);
    ds.split.assign(spec.n, Split::labeled_train);

    std::mt19937_64 noise1(derive_seed(spec.seed, {3}));
    std::mt19937_64 noise2(derive_seed(spec.seed, {4}));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const std::size_t y = i % spec.classes;
        ds.true_labels[i] = static_cast<int>(y);
        ds.labels[i] = static_cast<int>(y);
        for (std::size_t j = 0; j < spec.d1; ++j)
            ds.view1(i, j) = round_to_float(mean1(y, j) + spec.view_noise * normal(noise1));
        for (std::size_t j = 0; j < spec.d2; ++j)
            ds.view2(i, j) = round_to_float(mean2(y, j) + spec.view_noise * normal(noise2));
    }

    if (spec.label_noise > 0.0) {
        RngStream flip(derive_seed(spec.seed, {5}));
        const auto n_flip = static_cast<std::size_t>(std::llround(spec.label_noise * static_cast<double>(spec.n)));
        std::vector<std::size_t> order(spec.n);
        for (std::size_t i = 0; i < spec.n; ++i) order[i] = i;
        shuffle_with(order, flip.child({0}));
        RngStream pick = flip.child({1});
        for (std::size_t k = 0; k < n_flip; ++k) {
            const std::size_t i = order[k];
            const auto offset = 1 + static_cast<int>(pick.next_u64() % (spec.classes - 1));
            ds.labels[i] = (ds.labels[i] + offset) % static_cast<int>(spec.classes);
        }
    }
    return ds;
}

TwoViewDataset make_splits(const TwoViewDataset& ds, double labeled_fraction, double validation_fraction,
                           std::uint64_t seed, double test_fraction) {
    ds.validate();
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) throw InvalidInput("make_splits: labeled_fraction must be in (0,1]");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw InvalidInput("make_splits: validation_fraction must be in (0,1)");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InvalidInput("make_splits: test_fraction must be in [0,1)");

    TwoViewDataset out = ds;
    std::vector<std::vector<std::size_t>> by_class(ds.classes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == kUnlabeled) {
            out.split[i] = Split::unlabeled;
            continue;
        }
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }

    for (std::size_t c = 0; c < ds.classes; ++c) {
        auto rows = by_class[c];
        shuffle_with(rows, RngStream(derive_seed(seed, {0x5b117, c})));
        const std::size_t n_c = rows.size();
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n_c)));
        const std::size_t rest = n_c - n_test;
        const auto n_lab = std::min(rest, static_cast<std::size_t>(std::llround(labeled_fraction * static_cast<double>(rest))));
        if (n_lab == 0) throw InvalidInput("make_splits: class " + std::to_string(c) + " has no labeled rows");
        const auto n_val = std::min(
            n_lab, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n_lab)))));

        std::size_t k = 0;
        for (; k < n_test; ++k) out.split[rows[k]] = Split::test;
        for (std::size_t v = 0; v < n_val; ++v, ++k) out.split[rows[k]] = Split::validation;
        for (std::size_t t = n_val; t < n_lab; ++t, ++k) out.split[rows[k]] = Split::labeled_train;
        for (; k < n_c; ++k) {
            out.split[rows[k]] = Split::unlabeled;
            out.labels[rows[k]] = kUnlabeled;
        }
    }
    if (out.indices_of(Split::labeled_train).empty()) throw InvalidInput("make_splits: no labeled-train rows left");
    return out;
}

// ---------------------------------------------------------------------------
// Binary formats

namespace {
constexpr std::uint16_t kFormatVersion = 1;
using namespace binio;
}  // namespace

void write_embedding_binary(const std::filesystem::path& path, const DenseMatrix& m) {
    std::string buf = "TRCO";
    put_u16(buf, kFormatVersion);
    put_u32(buf, static_cast<std::uint32_t>(m.rows()));
    put_u32(buf, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.flat()) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    spit(path, buf);
}

DenseMatrix read_embedding_binary(const std::filesystem::path& path) {
    Reader r(slurp(path), path.string());
    r.expect_magic("TRCO");
    r.expect_version(kFormatVersion);
    const std::uint32_t n = r.u32("row count");
    const std::uint32_t d = r.u32("column count");
    const std::size_t total = static_cast<std::size_t>(n) * d;
    r.need(total * 4, "float payload");
    Vector data(total);
    for (double& v : data) v = static_cast<double>(std::bit_cast<float>(r.u32("float payload")));
    r.expect_end();
    return DenseMatrix(n, d, std::move(data));
}

void write_labels_binary(const std::filesystem::path& path, std::span<const int> labels) {
    std::string buf = "TRCL";
    put_u16(buf, kFormatVersion);
    put_u32(buf, static_cast<std::uint32_t>(labels.size()));
    for (int v : labels) put_u32(buf, static_cast<std::uint32_t>(v));
    spit(path, buf);
}

std::vector<int> read_labels_binary(const std::filesystem::path& path) {
    Reader r(slurp(path), path.string());
    r.expect_magic("TRCL");
    r.expect_version(kFormatVersion);
    const std::uint32_t n = r.u32("row count");
    r.need(static_cast<std::size_t>(n) * 4, "label payload");
    std::vector<int> labels(n);
    for (int& v : labels) v = static_cast<int>(r.u32("label payload"));
    r.expect_end();
    return labels;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
}

}  // namespace

void write_embedding_csv(const std::filesystem::path& path, const DenseMatrix& m) {
    std::ostringstream os;
    for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? "," : "") << 'f' << j;
    os << '\n';
    os << std::setprecision(std::numeric_limits<float>::max_digits10);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? "," : "") << static_cast<float>(m(i, j));
        os << '\n';
    }
    spit(path, os.str());
}

DenseMatrix read_embedding_csv(const std::filesystem::path& path) {
    const std::string text = slurp(path);
    std::istringstream in(text);
    std::string line;
    std::size_t offset = 0;
    if (!std::getline(in, line)) throw FormatError(path.string(), 0, "missing CSV header");
    const auto header = split_commas(trim(line));
    for (std::size_t j = 0; j < header.size(); ++j)
        if (trim(header[j]) != "f" + std::to_string(j))
            throw FormatError(path.string(), 0, "CSV header must be f0,...,f{d-1}");
    const std::size_t d = header.size();
    offset += line.size() + 1;
    Vector data;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const std::string_view row = trim(line);
        if (!row.empty()) {
            const auto cells = split_commas(row);
            if (cells.size() != d) throw FormatError(path.string(), offset, "CSV row has wrong number of columns");
            for (auto cell : cells) {
                cell = trim(cell);
                double v = 0.0;
                const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
                if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
                    throw FormatError(path.string(), offset, "bad number '" + std::string(cell) + "'");
                data.push_back(static_cast<double>(static_cast<float>(v)));
            }
            ++rows;
        }
        offset += line.size() + 1;
    }
    return DenseMatrix(rows, d, std::move(data));
}

void write_labels_csv(const std::filesystem::path& path, std::span<const int> labels) {
    std::ostringstream os;
    os << "label\n";
    for (int v : labels) os << v << '\n';
    spit(path, os.str());
}

std::vector<int> read_labels_csv(const std::filesystem::path& path) {
    const std::string text = slurp(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "label") throw FormatError(path.string(), 0, "CSV header must be 'label'");
    std::size_t offset = line.size() + 1;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        const std::string_view cell = trim(line);
        if (!cell.empty()) {
            int v = 0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
                throw FormatError(path.string(), offset, "bad label '" + std::string(cell) + "'");
            labels.push_back(v);
        }
        offset += line.size() + 1;
    }
    return labels;
}

TwoViewDataset load_embedding_file(const std::filesystem::path& view1, const std::filesystem::path& view2,
                                   const std::filesystem::path& labels, std::size_t classes) {
    auto is_csv = [](const std::filesystem::path& p) { return p.extension() == ".csv"; };
    TwoViewDataset ds;
    ds.view1 = is_csv(view1) ? read_embedding_csv(view1) : read_embedding_binary(view1);
    ds.view2 = is_csv(view2) ? read_embedding_csv(view2) : read_embedding_binary(view2);
    ds.labels = is_csv(labels) ? read_labels_csv(labels) : read_labels_binary(labels);
    const std::size_t n = ds.labels.size();
    if (ds.view1.rows() != n) throw FormatError(view1.string(), 0, "row count differs from label file");
    if (ds.view2.rows() != n) throw FormatError(view2.string(), 0, "row count differs from label file");
    int max_label = kUnlabeled;
    for (int y : ds.labels) {
        if (y < kUnlabeled) throw FormatError(labels.string(), 0, "label below -1");
        max_label = std::max(max_label, y);
    }
    ds.classes = classes != 0 ? classes : static_cast<std::size_t>(std::max(max_label + 1, 2));
    if (max_label >= static_cast<int>(ds.classes)) throw FormatError(labels.string(), 0, "label exceeds class count");
    ds.true_labels = ds.labels;
    ds.split.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.split[i] = ds.labels[i] == kUnlabeled ? Split::unlabeled : Split::labeled_train;
    return ds;
}

// ---------------------------------------------------------------------------
// Batching

BatchIterator::BatchIterator(const TwoViewDataset& ds, BatchPlan plan) : ds_(&ds), plan_(plan) {
    if (plan.labeled_batch == 0) throw InvalidInput("BatchPlan: labeled batch must be >= 1");
    labeled_pool_ = ds.indices_of(Split::labeled_train);
    unlabeled_pool_ = ds.indices_of(Split::unlabeled);
    validation_ = ds.indices_of(Split::validation);
    if (labeled_pool_.empty()) throw InvalidInput("BatchIterator: no labeled-train rows");
    for (std::size_t i : labeled_pool_) labeled_classes_.push_back(ds.labels[i]);
    const std::size_t ub = plan.unlabeled_batch();
    if (!unlabeled_pool_.empty() && ub > 0)
        steps_per_epoch_ = (unlabeled_pool_.size() + ub - 1) / ub;
    else
        steps_per_epoch_ = (labeled_pool_.size() + plan.labeled_batch - 1) / plan.labeled_batch;
    refill_unlabeled();
}

void BatchIterator::refill_unlabeled() {
    unlabeled_order_ = unlabeled_pool_;
    shuffle_with(unlabeled_order_, RngStream(derive_seed(plan_.seed, {0xe90c, epoch_})));
    unlabeled_cursor_ = 0;
}

std::size_t BatchIterator::next_labeled() {
    if (labeled_cursor_ == labeled_order_.size()) {
        RngStream rng(derive_seed(plan_.seed, {0x1abe1, labeled_round_++}));
        if (!plan_.class_balanced) {
            labeled_order_ = labeled_pool_;
            shuffle_with(labeled_order_, rng);
        } else {
            // round-robin over classes, each class shuffled
            std::vector<std::vector<std::size_t>> per_class(ds_->classes);
            for (std::size_t k = 0; k < labeled_pool_.size(); ++k)
                per_class[static_cast<std::size_t>(labeled_classes_[k])].push_back(labeled_pool_[k]);
            for (std::size_t c = 0; c < per_class.size(); ++c) shuffle_with(per_class[c], rng.child({c}));
            labeled_order_.clear();
            for (std::size_t r = 0; labeled_order_.size() < labeled_pool_.size(); ++r)
                for (const auto& rows : per_class)
                    if (r < rows.size()) labeled_order_.push_back(rows[r]);
        }
        labeled_cursor_ = 0;
    }
    return labeled_order_[labeled_cursor_++];
}

Batch BatchIterator::next() {
    Batch b;
    b.epoch = epoch_;
    b.step_in_epoch = step_in_epoch_;
    b.validation = &validation_;
    b.labeled.reserve(plan_.labeled_batch);
    for (std::size_t k = 0; k < plan_.labeled_batch; ++k) b.labeled.push_back(next_labeled());
    const std::size_t take = std::min(plan_.unlabeled_batch(), unlabeled_order_.size() - unlabeled_cursor_);
    b.unlabeled.assign(unlabeled_order_.begin() + static_cast<std::ptrdiff_t>(unlabeled_cursor_),
                       unlabeled_order_.begin() + static_cast<std::ptrdiff_t>(unlabeled_cursor_ + take));
    unlabeled_cursor_ += take;
    if (++step_in_epoch_ == steps_per_epoch_) {
        ++epoch_;
        step_in_epoch_ = 0;
        refill_unlabeled();
    }
    return b;
}

}  // namespace trico
