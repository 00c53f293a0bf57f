#pragma once

#include <optional>
#include <string>

#include "fedtt/fpt.hpp"
#include "fedtt/synth.hpp"
#include "fedtt/tvi.hpp"

namespace fedtt {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One JSON document per experiment. Unknown keys anywhere are rejected;
// flags override file values which override defaults.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    bool deterministic = true;
    std::string out_dir = "out";

    bool has_synthesis = false;
    SynthesisSpec synthesis;                // last city is the target
    std::vector<std::string> source_dirs;   // alternative: pre-generated datasets
    std::string target_dir;

    TviConfig tvi;
    std::size_t tvi_spatial_epochs = 120;
    std::size_t tvi_temporal_epochs = 400;
    double tvi_step = 0.05;
    double impute_holdout_fraction = 0.1;

    FederationConfig federation;
    bool run_baseline = false;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<bool> deterministic;
};

void apply_overrides(ExperimentConfig& cfg, const CliOverrides& overrides);

}  // namespace fedtt
