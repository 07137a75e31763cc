#pragma once

// The co-training loop: MC-dropout pseudo-labels exchanged across views,
// adversarial entropy regularization, SGD on both students and a meta-gradient
// step on the teacher. Also evaluation, calibration histograms, convergence
// monitors and per-step cost counters.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trico/data.hpp"
#include "trico/generator.hpp"
#include "trico/student.hpp"
#include "trico/teacher.hpp"
#include "trico/uncertainty.hpp"

namespace trico {

enum class FilterKind { mi, confidence, none };
/// before_step: meta-gradient from the pre-step students, applied after their
/// SGD step. after_step: meta-gradient from the already-updated students.
enum class MetaOrdering { before_step, after_step };

std::string_view filter_kind_name(FilterKind k) noexcept;
std::string_view meta_ordering_name(MetaOrdering m) noexcept;

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t steps_per_epoch = 0;  // 0: one pass over the unlabeled pool
    std::size_t hidden = 32;
    double dropout = 0.1;
    double eta_student = 0.03;
    double momentum = 0.9;
    std::optional<double> norm_bound;
    std::size_t labeled_batch = 64;
    std::size_t unlabeled_ratio = 7;  // mu
    bool class_balanced = false;
    std::size_t mc_passes = 5;        // K

    FilterKind filter = FilterKind::mi;
    FilterDirection direction = FilterDirection::above;
    double confidence_threshold = 0.95;

    bool generator_enabled = true;
    PerturbConfig perturb{};

    StrategyTriple teacher_init{};
    double eta_teacher = 0.01;
    double gate_temperature = 0.01;
    MetaOrdering meta_ordering = MetaOrdering::before_step;
    std::size_t teacher_every = 1;  // meta-update on steps divisible by this

    bool stability_stop = false;
    double eps_stop = 1e-4;
    std::size_t patience = 5;
    std::size_t stability_window = 10;  // W

    bool convergence_stop = false;
    double delta_h = 1e-3;
    double delta_a = 1e-3;
    std::size_t convergence_window = 5;

    std::size_t attack_steps = 10;        // robust-accuracy attack
    double attack_step_fraction = 0.25;   // step = fraction * epsilon
    bool robust_eval_each_epoch = false;

    std::uint64_t seed = 0;
    bool mirror_views = false;  // both students share init and RNG streams

    /// Throws InvalidInput on any out-of-range field.
    void validate() const;
    /// lambda_u = lambda_adv = 0 and eta_teacher = 0: the unlabeled pathway never runs.
    bool supervised_only() const noexcept;
};

/// Per-sample pass counts for one step, summed over both views.
struct CostCounters {
    std::size_t student_forward = 0;   // labeled, unlabeled and perturbed training passes
    std::size_t student_backward = 0;  // parameter backward passes of the real step
    std::size_t mi_forward = 0;        // K dropout passes per unlabeled row
    std::size_t perturb_gradient = 0;  // input-gradient passes of the generator (forward + input backward)
    std::size_t perturb_forward = 0;   // extra dropout passes for the MI term of the generator
    std::size_t meta_backward = 0;     // soft-gate inner gradients of the virtual update
    std::size_t meta_forward = 0;      // extra forwards when inner gradients cannot be shared
    std::size_t validation_forward = 0;
    std::size_t validation_backward = 0;

    /// Forward = 1 unit, parameter backward = 2, input-only backward = 1.
    double units() const noexcept;
    double student_units() const noexcept;

    CostCounters& operator+=(const CostCounters& o) noexcept;
    friend bool operator==(const CostCounters&, const CostCounters&) = default;
};

struct ViewStepStats {
    std::size_t candidates = 0;
    std::size_t accepted = 0;  // pseudo-labels this view emitted
    double mask_rate = 0.0;
    std::optional<double> impurity;
    bool no_pseudo_labels = false;  // student of the other view got L_unsup = 0
    double mean_mi = 0.0;

    friend bool operator==(const ViewStepStats&, const ViewStepStats&) = default;
};

struct StepReport {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double l_sup = 0.0;
    double l_unsup = 0.0;
    double l_adv = 0.0;
    double l_total = 0.0;
    StrategyTriple strategy;  // used by this step
    std::array<ViewStepStats, 2> views{};
    CostCounters cost;
    std::optional<RawStrategy> meta_gradient;  // dz applied after the step

    friend bool operator==(const StepReport&, const StepReport&) = default;
};

struct TrainerState {
    std::array<StudentParams, 2> students;
    std::array<OptimizerState, 2> optimizers;
    TeacherStrategy teacher;
    std::array<std::uint64_t, 2> view_seeds{};
    std::size_t step = 0;
};

/// Fresh students, optimizers over total_steps and the teacher at its initial triple.
TrainerState init_trainer(const TrainConfig& cfg, StudentShape shape1, StudentShape shape2, std::size_t total_steps);

/// Rows of one step gathered into dense matrices.
struct StepData {
    std::array<DenseMatrix, 2> labeled;
    std::vector<int> labels;
    std::array<DenseMatrix, 2> unlabeled;
    std::vector<std::size_t> unlabeled_rows;  // dataset row ids, also the RNG path for per-sample masks
    std::vector<int> unlabeled_truth;         // private labels for impurity; kUnlabeled when unknown
    std::array<DenseMatrix, 2> validation;
    std::vector<int> validation_labels;
    std::size_t epoch = 0;
};

StepData gather_step(const TwoViewDataset& ds, const Batch& batch);

/// Pseudo-label targets for each student: student v learns from view 1-v.
struct UnsupTargets {
    std::vector<int> labels;
    std::vector<double> hard_weights;  // 1 for accepted rows of the source view, else 0
    std::vector<double> source_mi;
};

std::array<UnsupTargets, 2> cross_view_targets(const std::array<std::vector<UncertaintyEstimate>, 2>& estimates,
                                               const std::array<FilterResult, 2>& filters);

/// One iteration of the loop; updates state in place.
StepReport train_step(TrainerState& state, const TrainConfig& cfg, const StepData& data);

struct EvalMetrics {
    std::size_t n = 0;
    double accuracy = 0.0;
    std::optional<double> pgd_robust_accuracy;
    double mean_entropy = 0.0;  // entropy of the ensemble distribution
    double agreement = 0.0;     // fraction of rows where the students' argmaxes agree

    friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

/// Eval-mode ensemble p̄ = (p1 + p2)/2 over the given rows. With an attack
/// config, a row is robust-correct when it is clean-correct and still correct
/// after each view is attacked independently. Throws InvalidInput on no rows.
EvalMetrics evaluate(const std::array<StudentParams, 2>& students, const TwoViewDataset& ds,
                     std::span<const std::size_t> rows, const PerturbConfig* attack);

/// The robust-accuracy attack for a training config.
PerturbConfig attack_config(const TrainConfig& cfg);

struct BinHistogram {
    std::vector<std::size_t> counts;
    std::vector<std::optional<double>> mismatch_rate;  // absent for an empty bin
};

/// Buckets rows by max p̄ into equal-width bins over [0,1] (1.0 goes to the last
/// bin). Rows without a private label are skipped. Throws InvalidInput for bins < 2.
BinHistogram bin_error_histogram(const std::array<StudentParams, 2>& students, const TwoViewDataset& ds,
                                 std::span<const std::size_t> rows, std::size_t bins = 5);

class ConvergenceMonitor {
public:
    explicit ConvergenceMonitor(std::size_t window = 5);

    void push(double mean_entropy, double agreement);
    std::size_t size() const noexcept { return entropy_.size(); }
    /// max - min over the last `window` values; nullopt until the window is full.
    std::optional<double> delta_entropy() const;
    std::optional<double> delta_agreement() const;
    bool converged(double delta_h, double delta_a) const;

private:
    std::size_t window_;
    std::vector<double> entropy_, agreement_;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double l_sup = 0.0, l_unsup = 0.0, l_adv = 0.0, l_total = 0.0;
    StrategyTriple strategy;  // at the end of the epoch
    double accuracy = 0.0;    // test split, validation when there is none
    std::optional<double> robust_accuracy;
    double mask_rate = 0.0;
    std::optional<double> impurity;
    double mean_entropy = 0.0;  // on the unlabeled pool
    double agreement = 0.0;
    std::optional<double> stability;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct CostSummary {
    std::size_t steps = 0;
    CostCounters per_step;  // integer mean over steps (exact when every step has the same shape)
    double units_per_step = 0.0;
    double student_units_per_step = 0.0;
    double ratio = 1.0;  // units / student units
};

CostSummary cost_counters(std::span<const StepReport> steps);

struct TrainingReport {
    std::vector<EpochMetrics> epochs;
    std::vector<StepReport> steps;
    std::vector<StrategyTriple> strategy_trace;  // before step 0, then after every step
    std::string stop_reason;                     // epochs | teacher-stability | convergence
    TrainerState final_state;
    EvalMetrics final_eval;
};

TrainingReport run_training(const TrainConfig& cfg, const TwoViewDataset& ds);

/// ‖∇θ L_total‖∞ over both students in eval mode on the labeled, unlabeled
/// (current filter) and perturbed pools; a first-order residual of the students.
double student_gradient_residual(const TrainerState& state, const TrainConfig& cfg, const TwoViewDataset& ds);

/// Meta-gradient at the current state over the whole unlabeled pool with the
/// validation split as the outer batch. Used by the equilibrium diagnostics.
MetaGradient full_meta_gradient(const TrainerState& state, const TrainConfig& cfg, const TwoViewDataset& ds,
                                double eta_student);

void write_curves_csv(const std::string& path, const TrainingReport& report);
void write_strategy_trace_csv(const std::string& path, const TrainingReport& report);

}  // namespace trico
