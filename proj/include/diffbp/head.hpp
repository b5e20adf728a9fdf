#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "diffbp/config.hpp"
#include "diffbp/data.hpp"
#include "diffbp/dit.hpp"
#include "diffbp/rng.hpp"
#include "diffbp/tensor.hpp"
#include "diffbp/train.hpp"

namespace diffbp {

// Two linear layers with a ReLU between; maps a feature vector to one score.
// Hidden width defaults to ceil(D / 2).
template <typename S>
struct RegressionHeadT {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    TensorT<S> w1, b1;  // input_dim -> hidden
    TensorT<S> w2, b2;  // hidden -> 1

    std::vector<std::pair<std::string, TensorT<S>*>> named_params() {
        return {{"head.w1", &w1}, {"head.b1", &b1}, {"head.w2", &w2}, {"head.b2", &b2}};
    }

    std::size_t param_count() const {
        return w1.numel() + b1.numel() + w2.numel() + b2.numel();
    }
};

using RegressionHead = RegressionHeadT<float>;

template <typename S>
RegressionHeadT<S> init_head(std::size_t input_dim, DiffusionRng& rng) {
    RegressionHeadT<S> h;
    h.input_dim = input_dim;
    h.hidden = (input_dim + 1) / 2;
    h.w1 = TensorT<S>::gaussian({input_dim, h.hidden}, rng, 0.02);
    h.b1 = TensorT<S>::zeros({h.hidden});
    h.w2 = TensorT<S>::gaussian({h.hidden, 1}, rng, 0.02);
    h.b2 = TensorT<S>::zeros({1});
    for (auto& [name, p] : h.named_params()) p->set_requires_grad(true);
    return h;
}

// Taped forward: linear2(relu(linear1(feature))) as a [1 x 1] tensor.
template <typename S>
TensorT<S> head_forward_taped(const RegressionHeadT<S>& h, const TensorT<S>& feature) {
    if (feature.numel() != h.input_dim)
        throw ShapeError("head: feature length " + std::to_string(feature.numel()) + " does not match input_dim " +
                         std::to_string(h.input_dim));
    TensorT<S> row = reshape(feature, {1, h.input_dim});
    TensorT<S> mid = relu(add_rowvec(matmul(row, h.w1), h.b1));
    return add_rowvec(matmul(mid, h.w2), h.b2);
}

template <typename S>
double head_forward(const RegressionHeadT<S>& h, const TensorT<S>& feature) {
    GradPause pause;
    return static_cast<double>(head_forward_taped(h, feature).item());
}

std::uint64_t head_checksum(const RegressionHead& h);

void save_head(const RegressionHead& h, const std::string& path);
RegressionHead load_head(const std::string& path);

struct HeadTrainConfig {
    double lr = 1e-2;
    double weight_decay = 0.0;
    std::size_t steps = 2000;
    std::size_t batch = 16;
    std::uint64_t seed = 7;
    std::size_t t_feat = 1;
};

struct FinetuneResult {
    RegressionHead head;
    std::vector<LossRecord> trace;  // MSE per step
};

// Trains only the head on MSE against the labels; the encoder must already
// be frozen. Features are computed once per image up front (the frozen
// encoder is deterministic, so caching is exact); cache_features = false
// recomputes them every step and must give bitwise-identical training.
FinetuneResult finetune_head(const DiTModel& encoder, const std::vector<LabeledSample>& data,
                             const HeadTrainConfig& cfg, bool cache_features = true);

double predict(const DiTModel& encoder, const RegressionHead& head, const Tensor& image, std::size_t t_feat,
               bool clamp = true);

// Scratch baseline for the ablation harness: encoder and head train jointly
// from random init on the downstream MSE (no diffusion pre-training, nothing
// frozen). Returns the trained pair with the encoder left unfrozen.
struct EndToEndConfig {
    double lr = 1e-3;
    double weight_decay = 0.0;
    std::size_t steps = 300;
    std::size_t batch = 8;
    std::uint64_t seed = 7;
    std::size_t t_feat = 1;
};

std::pair<DiTModel, RegressionHead> finetune_end_to_end(const DiTConfig& model_cfg,
                                                        const std::vector<LabeledSample>& data,
                                                        const EndToEndConfig& cfg);

}  // namespace diffbp
