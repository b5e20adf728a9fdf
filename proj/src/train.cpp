#include "diffbp/train.hpp"

#include <cstdio>
#include <fstream>

#include "diffbp/schedule.hpp"

namespace diffbp {

namespace {

void check_corpus(const std::vector<Tensor>& images, const DiTConfig& cfg) {
    if (images.empty()) throw ValidationError("pretraining corpus is empty");
    for (const Tensor& img : images) {
        if (img.rank() != 3 || img.dim(0) != cfg.image_h || img.dim(1) != cfg.image_w || img.dim(2) != cfg.channels)
            throw ShapeError("corpus image " + shape_to_string(img.shape()) + " does not match model config " +
                             std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w) + "x" +
                             std::to_string(cfg.channels));
    }
}

PretrainResult run_training(DiTModel model, AdamW opt, DiffusionRng noise_rng, std::uint64_t start_step,
                            std::size_t extra_steps, const std::vector<Tensor>& images, const RunConfig& cfg) {
    const NoiseSchedule schedule = build_schedule(cfg.schedule.timesteps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    const std::size_t batch = cfg.train.batch;
    BatchOrder order(cfg.train.seed, images.size(), start_step * batch);

    PretrainResult result{std::move(model), {}, {}};
    result.trace.reserve(extra_steps);
    for (std::uint64_t step = start_step + 1; step <= start_step + extra_steps; ++step) {
        Tensor loss_sum;
        for (std::size_t b = 0; b < batch; ++b) {
            const Tensor& x0 = images[order.next()];
            const std::size_t t = sample_timestep(noise_rng, schedule.timesteps);
            Tensor loss = denoise_loss(result.model, x0, t, noise_rng, schedule);
            loss_sum = b == 0 ? loss : add(loss_sum, loss);
        }
        Tensor loss = scalar_mul(loss_sum, 1.0f / static_cast<float>(batch));
        loss.backward();
        result.trace.push_back({step, loss.item()});
        opt.step();
    }
    result.checkpoint = make_checkpoint(result.model, &opt, noise_rng.state(), start_step + extra_steps);
    return result;
}

}  // namespace

PretrainResult pretrain(const std::vector<Tensor>& images, const RunConfig& cfg) {
    cfg.validate();
    check_corpus(images, cfg.model);
    DiffusionRng init_rng = derive_rng(cfg.train.seed, RngDomain::init);
    DiTModel model = init_dit<float>(cfg.model, init_rng);
    AdamW opt(
        [&] {
            std::vector<std::pair<std::string, Tensor>> params;
            for (auto& [name, p] : model.named_params()) params.emplace_back(name, *p);
            return params;
        }(),
        cfg.optim);
    DiffusionRng noise_rng = derive_rng(cfg.train.seed, RngDomain::noise);
    return run_training(std::move(model), std::move(opt), noise_rng, 0, cfg.train.steps, images, cfg);
}

PretrainResult pretrain_resume(const Checkpoint& start, const std::vector<Tensor>& images, const RunConfig& cfg,
                               std::size_t extra_steps) {
    cfg.validate();
    check_corpus(images, cfg.model);
    if (!start.has_optimizer)
        throw ContractError("cannot resume: checkpoint was saved without optimizer state");
    DiTModel model = model_from_checkpoint(start);
    AdamW opt(
        [&] {
            std::vector<std::pair<std::string, Tensor>> params;
            for (auto& [name, p] : model.named_params()) params.emplace_back(name, *p);
            return params;
        }(),
        cfg.optim);
    opt.restore_state(start.opt_m, start.opt_v, start.opt_step);
    DiffusionRng noise_rng;
    noise_rng.set_state(start.rng_state);
    return run_training(std::move(model), std::move(opt), noise_rng, start.step, extra_steps, images, cfg);
}

void write_loss_trace(const std::vector<LossRecord>& trace, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "step,loss\n";
    char buf[64];
    for (const LossRecord& r : trace) {
        std::snprintf(buf, sizeof(buf), "%llu,%.9g\n", static_cast<unsigned long long>(r.step),
                      static_cast<double>(r.loss));
        f << buf;
    }
    if (!f) throw IoError("short write to '" + path + "'");
}

}  // namespace diffbp
