#include "diffbp/checkpoint.hpp"

namespace diffbp {

namespace {
using Kind = CheckpointError::Kind;
}

Checkpoint make_checkpoint(const DiTModel& model, const AdamW* opt, std::uint64_t rng_state, std::uint64_t step) {
    Checkpoint ckpt;
    ckpt.config = model.cfg;
    for (auto& [name, p] : model.named_params()) ckpt.params.emplace_back(name, p->clone());
    if (opt) {
        ckpt.has_optimizer = true;
        ckpt.opt_m = opt->moments1();
        ckpt.opt_v = opt->moments2();
        ckpt.opt_step = opt->step_count();
    }
    ckpt.rng_state = rng_state;
    ckpt.step = step;
    return ckpt;
}

DiTModel model_from_checkpoint(const Checkpoint& ckpt) {
    DiffusionRng scratch(0);
    DiTModel m = init_dit<float>(ckpt.config, scratch);
    std::size_t i = 0;
    for (auto& [name, p] : m.named_params()) {
        if (i >= ckpt.params.size() || ckpt.params[i].first != name)
            throw CheckpointError(Kind::malformed, "checkpoint parameter order mismatch at '" + name + "'");
        const Tensor& src = ckpt.params[i].second;
        if (src.shape() != p->shape())
            throw CheckpointError(Kind::malformed, "checkpoint parameter '" + name + "' has shape " +
                                                       shape_to_string(src.shape()) + ", expected " +
                                                       shape_to_string(p->shape()));
        p->storage() = src.storage();
        ++i;
    }
    if (i != ckpt.params.size()) throw CheckpointError(Kind::malformed, "checkpoint has extra parameters");
    return m;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    DfbpFile file;
    file.meta = nlohmann::json{{"kind", "dit-checkpoint"},
                               {"config", dit_config_to_json(ckpt.config)},
                               {"has_optimizer", ckpt.has_optimizer},
                               {"opt_step", ckpt.opt_step},
                               {"rng_state", ckpt.rng_state},
                               {"step", ckpt.step}};
    for (const auto& [name, t] : ckpt.params) file.tensors.emplace_back("param/" + name, t);
    if (ckpt.has_optimizer) {
        if (ckpt.opt_m.size() != ckpt.params.size() || ckpt.opt_v.size() != ckpt.params.size())
            throw ContractError("checkpoint optimizer state does not align with parameters");
        for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
            const auto& shape = ckpt.params[i].second.shape();
            file.tensors.emplace_back("opt_m/" + ckpt.params[i].first, Tensor(shape, ckpt.opt_m[i]));
            file.tensors.emplace_back("opt_v/" + ckpt.params[i].first, Tensor(shape, ckpt.opt_v[i]));
        }
    }
    save_dfbp(file, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    DfbpFile file = load_dfbp(path);
    if (!file.meta.contains("kind") || file.meta.at("kind") != "dit-checkpoint")
        throw CheckpointError(Kind::malformed, "'" + path + "' is not a model checkpoint");
    Checkpoint ckpt;
    try {
        ckpt.config = dit_config_from_json(file.meta.at("config"));
        ckpt.has_optimizer = file.meta.at("has_optimizer").get<bool>();
        ckpt.opt_step = file.meta.at("opt_step").get<std::uint64_t>();
        ckpt.rng_state = file.meta.at("rng_state").get<std::uint64_t>();
        ckpt.step = file.meta.at("step").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(Kind::malformed, std::string("bad checkpoint metadata: ") + e.what());
    }
    for (const auto& [name, t] : file.tensors) {
        if (name.rfind("param/", 0) == 0) {
            ckpt.params.emplace_back(name.substr(6), t);
        } else if (name.rfind("opt_m/", 0) == 0) {
            ckpt.opt_m.push_back(t.storage());
        } else if (name.rfind("opt_v/", 0) == 0) {
            ckpt.opt_v.push_back(t.storage());
        } else {
            throw CheckpointError(Kind::malformed, "unexpected tensor '" + name + "' in checkpoint");
        }
    }
    if (ckpt.has_optimizer &&
        (ckpt.opt_m.size() != ckpt.params.size() || ckpt.opt_v.size() != ckpt.params.size()))
        throw CheckpointError(Kind::malformed, "optimizer state does not align with parameters");
    return ckpt;
}

}  // namespace diffbp
