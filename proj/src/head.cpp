#include "diffbp/head.hpp"

#include <algorithm>
#include <cstring>

#include "diffbp/adamw.hpp"
#include "diffbp/container.hpp"

namespace diffbp {

std::uint64_t head_checksum(const RegressionHead& h) {
    std::uint64_t acc = 0xcbf29ce484222325ull;
    auto& mut = const_cast<RegressionHead&>(h);
    for (auto& [name, p] : mut.named_params()) {
        for (std::size_t i = 0; i < p->numel(); ++i) {
            unsigned char bytes[4];
            std::memcpy(bytes, &p->data()[i], 4);
            for (unsigned char b : bytes) {
                acc ^= b;
                acc *= 0x100000001b3ull;
            }
        }
    }
    return acc;
}

void save_head(const RegressionHead& h, const std::string& path) {
    DfbpFile file;
    file.meta = nlohmann::json{{"kind", "head"}, {"input_dim", h.input_dim}, {"hidden", h.hidden}};
    auto& mut = const_cast<RegressionHead&>(h);
    for (auto& [name, p] : mut.named_params()) file.tensors.emplace_back(name, p->clone());
    save_dfbp(file, path);
}

RegressionHead load_head(const std::string& path) {
    DfbpFile file = load_dfbp(path);
    if (!file.meta.contains("kind") || file.meta.at("kind") != "head")
        throw CheckpointError(CheckpointError::Kind::malformed, "'" + path + "' is not a head checkpoint");
    RegressionHead h;
    h.input_dim = file.meta.at("input_dim").get<std::size_t>();
    h.hidden = file.meta.at("hidden").get<std::size_t>();
    h.w1 = file.find("head.w1").clone();
    h.b1 = file.find("head.b1").clone();
    h.w2 = file.find("head.w2").clone();
    h.b2 = file.find("head.b2").clone();
    if (h.w1.shape() != std::vector<std::size_t>{h.input_dim, h.hidden} ||
        h.w2.shape() != std::vector<std::size_t>{h.hidden, 1})
        throw CheckpointError(CheckpointError::Kind::malformed, "head tensor shapes do not match metadata");
    for (auto& [name, p] : h.named_params()) p->set_requires_grad(true);
    return h;
}

FinetuneResult finetune_head(const DiTModel& encoder, const std::vector<LabeledSample>& data,
                             const HeadTrainConfig& cfg, bool cache_features) {
    if (!encoder.frozen) throw ContractError("finetune_head requires a frozen encoder");
    if (data.empty()) throw ValidationError("finetune_head: no labeled samples");

    std::vector<Tensor> features;
    if (cache_features) {
        features.reserve(data.size());
        for (const LabeledSample& s : data) features.push_back(extract_features(encoder, s.image, cfg.t_feat));
    }
    auto feature_of = [&](std::size_t i) {
        return cache_features ? features[i] : extract_features(encoder, data[i].image, cfg.t_feat);
    };

    DiffusionRng init_rng = derive_rng(cfg.seed, RngDomain::head_init);
    FinetuneResult result;
    result.head = init_head<float>(encoder.cfg.hidden_dim, init_rng);

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    AdamW opt(
        [&] {
            std::vector<std::pair<std::string, Tensor>> params;
            for (auto& [name, p] : result.head.named_params()) params.emplace_back(name, *p);
            return params;
        }(),
        opt_cfg);

    const std::size_t batch = std::min(cfg.batch, data.size());
    BatchOrder order(cfg.seed, data.size());
    result.trace.reserve(cfg.steps);
    for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
        Tensor loss_sum;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t i = order.next();
            Tensor pred = head_forward_taped(result.head, feature_of(i));
            Tensor target = Tensor({1, 1}, {static_cast<float>(data[i].score)});
            Tensor loss = mse(pred, target);
            loss_sum = b == 0 ? loss : add(loss_sum, loss);
        }
        Tensor loss = scalar_mul(loss_sum, 1.0f / static_cast<float>(batch));
        loss.backward();
        result.trace.push_back({step, loss.item()});
        opt.step();
    }
    return result;
}

double predict(const DiTModel& encoder, const RegressionHead& head, const Tensor& image, std::size_t t_feat,
               bool clamp) {
    const double raw = head_forward(head, extract_features(encoder, image, t_feat));
    return clamp ? std::clamp(raw, 1.0, 5.0) : raw;
}

std::pair<DiTModel, RegressionHead> finetune_end_to_end(const DiTConfig& model_cfg,
                                                        const std::vector<LabeledSample>& data,
                                                        const EndToEndConfig& cfg) {
    if (data.empty()) throw ValidationError("finetune_end_to_end: no labeled samples");
    DiffusionRng init_rng = derive_rng(cfg.seed, RngDomain::init);
    DiTModel model = init_dit<float>(model_cfg, init_rng);
    DiffusionRng head_rng = derive_rng(cfg.seed, RngDomain::head_init);
    RegressionHead head = init_head<float>(model_cfg.hidden_dim, head_rng);

    AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    std::vector<std::pair<std::string, Tensor>> params;
    for (auto& [name, p] : model.named_params()) {
        // The denoising output layers sit after the feature tap and never
        // receive gradients from the regression loss.
        if (name.rfind("final", 0) == 0) continue;
        params.emplace_back(name, *p);
    }
    for (auto& [name, p] : head.named_params()) params.emplace_back(name, *p);
    AdamW opt(std::move(params), opt_cfg);

    const std::size_t batch = std::min(cfg.batch, data.size());
    BatchOrder order(cfg.seed, data.size());
    for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
        Tensor loss_sum;
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t i = order.next();
            Tensor tokens = encoder_tokens(model, data[i].image, cfg.t_feat);
            Tensor pooled = model.cfg.has_cls() ? slice_rows(tokens, 0, 1) : mean_rows(tokens);
            Tensor pred = head_forward_taped(head, reshape(pooled, {model.cfg.hidden_dim}));
            Tensor target = Tensor({1, 1}, {static_cast<float>(data[i].score)});
            Tensor loss = mse(pred, target);
            loss_sum = b == 0 ? loss : add(loss_sum, loss);
        }
        Tensor loss = scalar_mul(loss_sum, 1.0f / static_cast<float>(batch));
        loss.backward();
        opt.step();
    }
    return {std::move(model), std::move(head)};
}

}  // namespace diffbp
