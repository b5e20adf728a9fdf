#include "diffbp/config.hpp"

#include <cstdio>
#include <fstream>

namespace diffbp {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const char* section) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known)
            throw ValidationError("unknown key '" + it.key() + "' in config section '" + section + "'");
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("config field '") + key + "' has the wrong type");
    }
}

}  // namespace

nlohmann::json dit_config_to_json(const DiTConfig& cfg) {
    return json{{"image_h", cfg.image_h},       {"image_w", cfg.image_w},
                {"channels", cfg.channels},     {"patch_size", cfg.patch_size},
                {"hidden_dim", cfg.hidden_dim}, {"depth", cfg.depth},
                {"num_heads", cfg.num_heads},   {"mlp_ratio", cfg.mlp_ratio},
                {"timesteps", cfg.timesteps},   {"pooling", pooling_name(cfg.pooling)}};
}

DiTConfig dit_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"image_h", "image_w", "channels", "patch_size", "hidden_dim", "depth", "num_heads",
                         "mlp_ratio", "timesteps", "pooling"},
                        "model");
    DiTConfig cfg;
    read_field(j, "image_h", cfg.image_h);
    read_field(j, "image_w", cfg.image_w);
    read_field(j, "channels", cfg.channels);
    read_field(j, "patch_size", cfg.patch_size);
    read_field(j, "hidden_dim", cfg.hidden_dim);
    read_field(j, "depth", cfg.depth);
    read_field(j, "num_heads", cfg.num_heads);
    read_field(j, "mlp_ratio", cfg.mlp_ratio);
    read_field(j, "timesteps", cfg.timesteps);
    if (j.contains("pooling")) cfg.pooling = pooling_from_name(j.at("pooling").get<std::string>());
    return cfg;
}

void RunConfig::validate() const {
    model.validate();
    if (!(schedule.beta_start > 0.0) || !(schedule.beta_end < 1.0) || schedule.beta_start > schedule.beta_end)
        throw ValidationError("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
    if (schedule.timesteps < 1) throw ValidationError("schedule.timesteps must be >= 1");
    if (optim.lr <= 0 || optim.eps <= 0) throw ValidationError("optimizer lr and eps must be positive");
    if (optim.beta1 < 0 || optim.beta1 >= 1 || optim.beta2 < 0 || optim.beta2 >= 1)
        throw ValidationError("optimizer betas must lie in [0, 1)");
    if (optim.weight_decay < 0) throw ValidationError("weight_decay must be nonnegative");
    if (train.steps < 1 || train.batch < 1) throw ValidationError("train.steps and train.batch must be >= 1");
    if (eval.k < 2) throw ValidationError("eval.k must be >= 2");
    if (eval.head_steps < 1 || eval.head_batch < 1) throw ValidationError("eval head training sizes must be >= 1");
    if (eval.head_lr <= 0 || eval.e2e_lr <= 0) throw ValidationError("eval learning rates must be positive");
    if (feature.t_feat < 1 || feature.t_feat > schedule.timesteps)
        throw ValidationError("feature.t_feat must lie in [1, schedule.timesteps]");
    if (model.timesteps != schedule.timesteps)
        throw ValidationError("model.timesteps must equal schedule.timesteps");
    if (model.pooling != feature.pooling) throw ValidationError("model.pooling must equal feature.pooling");
}

nlohmann::json RunConfig::to_json() const {
    json j;
    json m = dit_config_to_json(model);
    m.erase("timesteps");  // mirrored from schedule
    m.erase("pooling");    // mirrored from feature
    j["model"] = m;
    j["schedule"] = {{"T", schedule.timesteps}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}};
    j["optim"] = {{"lr", optim.lr},
                  {"beta1", optim.beta1},
                  {"beta2", optim.beta2},
                  {"eps", optim.eps},
                  {"weight_decay", optim.weight_decay}};
    j["train"] = {{"steps", train.steps}, {"batch", train.batch}, {"seed", train.seed}};
    j["eval"] = {{"k", eval.k},
                 {"seed", eval.seed},
                 {"folds_csv", eval.folds_csv},
                 {"head_lr", eval.head_lr},
                 {"head_steps", eval.head_steps},
                 {"head_batch", eval.head_batch},
                 {"head_weight_decay", eval.head_weight_decay},
                 {"e2e_steps", eval.e2e_steps},
                 {"e2e_lr", eval.e2e_lr},
                 {"clamp", eval.clamp}};
    j["feature"] = {{"pooling", pooling_name(feature.pooling)}, {"t_feat", feature.t_feat}};
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config root must be a JSON object");
    reject_unknown_keys(j, {"model", "schedule", "optim", "train", "eval", "feature"}, "<root>");
    RunConfig cfg;

    if (j.contains("model")) {
        json m = j.at("model");
        reject_unknown_keys(
            m, {"image_h", "image_w", "channels", "patch_size", "hidden_dim", "depth", "num_heads", "mlp_ratio"},
            "model");
        read_field(m, "image_h", cfg.model.image_h);
        read_field(m, "image_w", cfg.model.image_w);
        read_field(m, "channels", cfg.model.channels);
        read_field(m, "patch_size", cfg.model.patch_size);
        read_field(m, "hidden_dim", cfg.model.hidden_dim);
        read_field(m, "depth", cfg.model.depth);
        read_field(m, "num_heads", cfg.model.num_heads);
        read_field(m, "mlp_ratio", cfg.model.mlp_ratio);
    }
    if (j.contains("schedule")) {
        json s = j.at("schedule");
        reject_unknown_keys(s, {"T", "beta_start", "beta_end"}, "schedule");
        read_field(s, "T", cfg.schedule.timesteps);
        read_field(s, "beta_start", cfg.schedule.beta_start);
        read_field(s, "beta_end", cfg.schedule.beta_end);
    }
    if (j.contains("optim")) {
        json o = j.at("optim");
        reject_unknown_keys(o, {"lr", "beta1", "beta2", "eps", "weight_decay"}, "optim");
        read_field(o, "lr", cfg.optim.lr);
        read_field(o, "beta1", cfg.optim.beta1);
        read_field(o, "beta2", cfg.optim.beta2);
        read_field(o, "eps", cfg.optim.eps);
        read_field(o, "weight_decay", cfg.optim.weight_decay);
    }
    if (j.contains("train")) {
        json t = j.at("train");
        reject_unknown_keys(t, {"steps", "batch", "seed"}, "train");
        read_field(t, "steps", cfg.train.steps);
        read_field(t, "batch", cfg.train.batch);
        read_field(t, "seed", cfg.train.seed);
    }
    if (j.contains("eval")) {
        json e = j.at("eval");
        reject_unknown_keys(e,
                            {"k", "seed", "folds_csv", "head_lr", "head_steps", "head_batch", "head_weight_decay",
                             "e2e_steps", "e2e_lr", "clamp"},
                            "eval");
        read_field(e, "k", cfg.eval.k);
        read_field(e, "seed", cfg.eval.seed);
        read_field(e, "folds_csv", cfg.eval.folds_csv);
        read_field(e, "head_lr", cfg.eval.head_lr);
        read_field(e, "head_steps", cfg.eval.head_steps);
        read_field(e, "head_batch", cfg.eval.head_batch);
        read_field(e, "head_weight_decay", cfg.eval.head_weight_decay);
        read_field(e, "e2e_steps", cfg.eval.e2e_steps);
        read_field(e, "e2e_lr", cfg.eval.e2e_lr);
        read_field(e, "clamp", cfg.eval.clamp);
    }
    if (j.contains("feature")) {
        json f = j.at("feature");
        reject_unknown_keys(f, {"pooling", "t_feat"}, "feature");
        if (f.contains("pooling")) cfg.feature.pooling = pooling_from_name(f.at("pooling").get<std::string>());
        read_field(f, "t_feat", cfg.feature.t_feat);
    }

    cfg.model.timesteps = cfg.schedule.timesteps;
    cfg.model.pooling = cfg.feature.pooling;
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

std::string RunConfig::fingerprint() const {
    const std::string s = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace diffbp
