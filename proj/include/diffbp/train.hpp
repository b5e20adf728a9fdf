#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffbp/checkpoint.hpp"
#include "diffbp/config.hpp"
#include "diffbp/diffusion.hpp"
#include "diffbp/dit.hpp"

namespace diffbp {

struct LossRecord {
    std::uint64_t step;  // 1-based
    float loss;
};

struct PretrainResult {
    DiTModel model;
    Checkpoint checkpoint;
    std::vector<LossRecord> trace;
};

// Named rng stream domains derived from a run seed. Epoch shuffles and
// per-fold training use the index slot.
enum class RngDomain : std::uint64_t {
    init = 0,
    noise = 1,
    shuffle = 2,
    fold = 3,
    corpus_params = 4,
    corpus_texture = 5,
    head_init = 6,
    sample = 7,
};

inline DiffusionRng derive_rng(std::uint64_t seed, RngDomain domain, std::uint64_t index = 0) {
    return DiffusionRng::derive(seed, (static_cast<std::uint64_t>(domain) << 32) ^ index);
}

// Deterministic sample order: a fresh Fisher-Yates shuffle per epoch, seeded
// from (seed, epoch), consumed sequentially. Resume at any global position
// reproduces the unbroken stream.
class BatchOrder {
public:
    BatchOrder(std::uint64_t seed, std::size_t n, std::uint64_t start_position = 0)
        : seed_(seed), n_(n), position_(start_position) {}

    std::size_t next() {
        const std::uint64_t epoch = position_ / n_;
        if (order_.empty() || epoch != epoch_) rebuild(epoch);
        return order_[position_++ % n_];
    }

private:
    void rebuild(std::uint64_t epoch) {
        epoch_ = epoch;
        order_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
        DiffusionRng rng = derive_rng(seed_, RngDomain::shuffle, epoch);
        for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng.uniform_below(i)]);
    }

    std::uint64_t seed_;
    std::size_t n_;
    std::uint64_t position_;
    std::uint64_t epoch_ = ~0ull;
    std::vector<std::size_t> order_;
};

// Phase-1 pre-training: sample a batch, sample t uniformly, sample eps, take
// an AdamW step on the noise-prediction loss. Fully deterministic from
// (seed, config, corpus).
PretrainResult pretrain(const std::vector<Tensor>& images, const RunConfig& cfg);

// Continue from a saved checkpoint for extra_steps more steps. Produces the
// same parameters and loss records as an unbroken run of the same length.
PretrainResult pretrain_resume(const Checkpoint& start, const std::vector<Tensor>& images, const RunConfig& cfg,
                               std::size_t extra_steps);

void write_loss_trace(const std::vector<LossRecord>& trace, const std::string& path);

}  // namespace diffbp
