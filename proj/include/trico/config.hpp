#pragma once

// Run configuration: flat `section.key = value` lines, `#` comments, blank
// lines ignored. Later lines and command-line overrides win. Every key has a
// default; unknown keys, malformed values and constraint violations raise
// ConfigError with the offending line (0 for overrides).

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "trico/data.hpp"
#include "trico/engine.hpp"

namespace trico {

enum class DataSource { synthetic, files };

struct DataConfig {
    DataSource source = DataSource::synthetic;
    SyntheticSpec synthetic{};
    std::string view1, view2, labels;  // for source = files
    std::string true_labels;           // optional private labels for impurity
    std::size_t labeled = 40;          // labeled rows including validation
    double validation_fraction = 0.1;  // of the labeled rows
    std::size_t test = 1000;           // held-out rows
    std::uint64_t split_seed = 0;
};

struct GameConfig {
    std::size_t budget_epochs = 10;  // retraining budget of the student best response
    std::size_t probe_size = 256;    // unlabeled rows for R_S / R_G
    double tolerance = 1e-2;         // grid-Nash and first-order residual threshold
    std::vector<std::uint64_t> student_seeds{1, 2};  // retrain deviations
};

struct RunConfig {
    TrainConfig train{};
    DataConfig data{};
    GameConfig game{};
    std::string out = "out";
    bool multi_seed = false;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t bins = 5;
    std::string model;  // eval: model file, default <out>/model.trcm

    /// Throws ConfigError(0, ...) on constraint violations across keys.
    void validate() const;
};

/// Parses config text; `overrides` are (key, value) pairs applied afterwards.
RunConfig parse_config(const std::string& text, const std::vector<std::pair<std::string, std::string>>& overrides = {});
/// Reads the file (missing file: ConfigError) then parses.
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Every key with its resolved value, in a fixed order. Feeding the result of
/// config_text() back into parse_config reproduces the same RunConfig.
std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg);
std::string config_text(const RunConfig& cfg);

/// The dataset the config describes, split and validated.
TwoViewDataset build_dataset(const DataConfig& data);

}  // namespace trico
