#pragma once

#include <string>

#include "fedtt/config.hpp"
#include "fedtt/fpt.hpp"

namespace fedtt {

// Experiment commands behind the CLI. All outputs land under cfg.out_dir:
//   gen-data  -> <out>/data/<city>/{adjacency.csv,readings.csv} + manifest.json
//   impute    -> <out>/imputed/<city>/... + <out>/checkpoints/tvi_<city>.bin
//   transfer  -> <out>/report.{txt,json}, <out>/transcript.txt, checkpoints
//   eval      -> metrics table on stdout (read-only)

void cmd_gen_data(const ExperimentConfig& cfg);

struct ImputeOutcome {
    double holdout_mae = 0.0;    // TVI error on deliberately hidden observed rows
    double meanfill_mae = 0.0;   // per-sensor mean-fill baseline on the same rows
};
ImputeOutcome cmd_impute(const ExperimentConfig& cfg);

RunReport cmd_transfer(const ExperimentConfig& cfg);

EvalMetrics cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path);

// Resolution order for datasets: explicit dirs, <out>/imputed, <out>/data,
// in-memory synthesis.
FederationData resolve_federation_data(const ExperimentConfig& cfg);

// FEDTT_LOG = quiet | info | debug (default info); writes to stderr.
void log_info(const std::string& line);
void log_debug(const std::string& line);

}  // namespace fedtt
