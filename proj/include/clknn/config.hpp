#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clknn/adapter.hpp"
#include "clknn/retrieval.hpp"
#include "clknn/synthbench.hpp"

namespace clknn {

/// Union of the per-module configs, parsed from one flat JSON object.
/// Unknown keys are rejected. All stage seeds are split deterministically
/// from the single top-level seed.
struct PipelineConfig {
    SynthConfig synth;
    TrainConfig train;
    RetrievalConfig retrieval;
    std::uint32_t pca_dim = 16;
    std::uint32_t predictor_epochs = 40;
    double predictor_lr = 0.1;
    std::vector<std::uint32_t> curve_ks = {1, 2, 4, 8, 16, 32, 64};
    std::vector<std::uint32_t> grid_M = {1, 2};
    std::vector<std::uint32_t> grid_N = {1, 16, 32};
    std::uint64_t seed = 42;
    std::uint64_t predictor_seed = 0; // derived, not a config key
};

PipelineConfig parse_pipeline_config_json(const std::string& text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Re-split the per-stage seeds from a new top-level seed (--seed override).
void reseed_pipeline(PipelineConfig& cfg, std::uint64_t seed);

} // namespace clknn
