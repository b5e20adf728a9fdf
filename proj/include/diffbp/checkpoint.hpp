#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "diffbp/adamw.hpp"
#include "diffbp/config.hpp"
#include "diffbp/container.hpp"
#include "diffbp/dit.hpp"

namespace diffbp {

// Serializable training state. Parameter tensors are deep copies in naming
// order; optimizer moments, when present, align with them.
struct Checkpoint {
    DiTConfig config;
    std::vector<std::pair<std::string, Tensor>> params;
    bool has_optimizer = false;
    std::vector<std::vector<float>> opt_m, opt_v;
    std::uint64_t opt_step = 0;
    std::uint64_t rng_state = 0;
    std::uint64_t step = 0;
};

Checkpoint make_checkpoint(const DiTModel& model, const AdamW* opt, std::uint64_t rng_state, std::uint64_t step);

// Rebuilds the model with parameters copied from the checkpoint (unfrozen,
// gradients enabled).
DiTModel model_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace diffbp
