#pragma once

#include <string>
#include <vector>

#include "fedtt/mat.hpp"
#include "fedtt/predictor.hpp"
#include "fedtt/tda.hpp"
#include "fedtt/tvi.hpp"

namespace fedtt {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shared binary layout: 4-byte magic, u32 block count, then per block a u32
// dimension count, the u32 dims, and row-major little-endian f64 data.
// Magics: TVI1 (imputation model), TDA1 (domain adapter), FTP1 (predictor).
void write_blocks(const std::string& path, const char magic[4],
                  const std::vector<Mat>& blocks);
std::vector<Mat> read_blocks(const std::string& path, const char magic[4]);

void save_tvi_checkpoint(const std::string& path, const SpatialModelParams& sv,
                         const TemporalModelParams& tv);
void load_tvi_checkpoint(const std::string& path, SpatialModelParams& sv,
                         TemporalModelParams& tv);

void save_tda_checkpoint(const std::string& path, const TransformBundle& tb,
                         const GeneratorParams& gen);
void load_tda_checkpoint(const std::string& path, TransformBundle& tb, GeneratorParams& gen);

void save_predictor_checkpoint(const std::string& path, const PredictorModel& model);
void load_predictor_checkpoint(const std::string& path, PredictorModel& model);

}  // namespace fedtt
