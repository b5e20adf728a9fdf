#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "diffbp/adamw.hpp"
#include "diffbp/dit.hpp"
#include "diffbp/errors.hpp"

namespace diffbp {

struct ScheduleConfig {
    std::size_t timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct TrainConfig {
    std::size_t steps = 500;
    std::size_t batch = 8;
    std::uint64_t seed = 42;
};

struct EvalConfig {
    std::size_t k = 5;
    std::uint64_t seed = 7;
    std::string folds_csv;  // optional external fold assignment
    double head_lr = 1e-2;
    std::size_t head_steps = 2000;
    std::size_t head_batch = 16;
    double head_weight_decay = 0.0;
    std::size_t e2e_steps = 300;   // scratch end-to-end ablation variant
    double e2e_lr = 1e-3;
    bool clamp = true;
};

struct FeatureConfig {
    FeaturePooling pooling = FeaturePooling::cls_token;
    std::size_t t_feat = 1;
};

// Full run configuration. JSON sections mirror the fields here; unknown keys
// are rejected and every field has a default, so "{}" is a valid document.
struct RunConfig {
    DiTConfig model;  // model.pooling mirrors feature.pooling, model.timesteps mirrors schedule.timesteps
    ScheduleConfig schedule;
    AdamWConfig optim;
    TrainConfig train;
    EvalConfig eval;
    FeatureConfig feature;

    void validate() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load_file(const std::string& path);

    // Stable hash of the canonical JSON form, reported in eval output.
    std::string fingerprint() const;
};

nlohmann::json dit_config_to_json(const DiTConfig& cfg);
DiTConfig dit_config_from_json(const nlohmann::json& j);

}  // namespace diffbp
