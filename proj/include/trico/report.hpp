#pragma once

// JSON reports. Keys are sorted and nothing time-dependent is written, so equal
// runs give byte-identical files.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trico/config.hpp"
#include "trico/engine.hpp"
#include "trico/game.hpp"
#include "trico/model_io.hpp"

namespace trico {

struct SeedRun {
    std::uint64_t seed = 0;
    TrainingReport report;
    BinHistogram calibration;  // on the evaluation split
};

/// The rows a run is evaluated on: test, or validation when there is no test split.
std::vector<std::size_t> evaluation_rows(const TwoViewDataset& ds);

/// One training run per seed on the same dataset.
SeedRun run_seed(const RunConfig& cfg, const TwoViewDataset& ds, std::uint64_t seed);

/// Sample mean and standard deviation (n - 1; 0 for a single value).
struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};
MeanSd mean_sd(std::span<const double> values);

std::string training_report_json(const RunConfig& cfg, std::span<const SeedRun> runs);
std::string eval_report_json(const RunConfig& cfg, const EvalMetrics& metrics, const BinHistogram& calibration);

struct EquilibriumResult {
    StrategyGrid grid;
    Profile incumbent;  // (0, 0, 0): the run's teacher, seed and generator
    NashResidual incumbent_residual;
    BrDynamics dynamics;
    NashResidual final_residual;
    StackelbergResidual first_order;
    std::map<Profile, Payoffs> points;
    double tolerance = 0.0;
    std::size_t budget_epochs = 0;
    std::size_t probe_size = 0;
};

/// Grid point 0 of each player is the saved run; deviations retrain students
/// for game.budget_epochs with the teacher frozen.
EquilibriumResult run_equilibrium(const RunConfig& cfg, const TwoViewDataset& ds, const SavedModel& model);
std::string equilibrium_report_json(const RunConfig& cfg, const EquilibriumResult& result);

}  // namespace trico
