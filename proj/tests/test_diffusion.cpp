#include <cmath>

#include "doctest.h"

#include "diffbp/diffusion.hpp"

using namespace diffbp;

namespace {

DiTConfig tiny_config() {
    DiTConfig cfg;
    cfg.image_h = cfg.image_w = 8;
    cfg.channels = 1;
    cfg.patch_size = 2;
    cfg.hidden_dim = 16;
    cfg.depth = 2;
    cfg.num_heads = 2;
    cfg.mlp_ratio = 2;
    cfg.timesteps = 50;
    return cfg;
}

}  // namespace

TEST_SUITE("diffusion") {
    TEST_CASE("a perfect denoiser has zero loss") {
        NoiseSchedule s = build_schedule(50, 1e-4, 0.02);
        DiffusionRng rng(5);
        Tensor x0 = Tensor::gaussian({8, 8, 1}, rng);
        Tensor eps = Tensor::gaussian({8, 8, 1}, rng);
        auto oracle = [&](const Tensor&, std::size_t) { return eps; };
        Tensor loss = denoise_loss_given(oracle, x0, 20, eps, s);
        CHECK(loss.item() == 0.0f);
    }

    TEST_CASE("a zero denoiser converges to unit loss over draws") {
        NoiseSchedule s = build_schedule(50, 1e-4, 0.02);
        DiffusionRng rng(6);
        Tensor x0 = Tensor::zeros({8, 8, 1});
        auto zero_model = [&](const Tensor& xt, std::size_t) { return Tensor::zeros(xt.shape()); };
        double acc = 0;
        const int draws = 200;
        for (int i = 0; i < draws; ++i) {
            const std::size_t t = sample_timestep(rng, 50);
            acc += denoise_loss_fn(zero_model, x0, t, rng, s).item();
        }
        // E[eps^2] = 1; 200 draws x 64 elements
        CHECK(acc / draws == doctest::Approx(1.0).epsilon(0.05));
    }

    TEST_CASE("denoise_loss tapes into every unfrozen model parameter") {
        DiffusionRng rng(7);
        DiTModel m = init_dit<float>(tiny_config(), rng);
        randomize_parameters(m, rng);
        NoiseSchedule s = build_schedule(50, 1e-4, 0.02);
        Tensor x0 = Tensor::gaussian({8, 8, 1}, rng);
        Tensor loss = denoise_loss(m, x0, 17, rng, s);
        loss.backward();
        for (auto& [name, p] : m.named_params()) {
            INFO(name);
            CHECK(p->has_grad());
        }
    }

    TEST_CASE("single-step ancestral sampling inverts the forward map") {
        NoiseSchedule s = build_schedule(1, 0.3, 0.3);
        DiffusionRng rng(8);
        Tensor x0 = Tensor::gaussian({4, 4, 1}, rng);
        Tensor eps = Tensor::gaussian({4, 4, 1}, rng);
        Tensor x1 = forward_sample(x0, 1, eps, s);
        auto oracle = [&](const Tensor&, std::size_t) { return eps; };
        Tensor recovered = ancestral_sample_from(oracle, s, x1, 1, rng);
        for (std::size_t i = 0; i < x0.numel(); ++i)
            CHECK(std::abs(recovered.data()[i] - x0.data()[i]) < 1e-4f);
    }

    TEST_CASE("sampler output shape and determinism") {
        DiffusionRng rng(9);
        DiTModel m = init_dit<float>(tiny_config(), rng);
        randomize_parameters(m, rng, 0.05);
        NoiseSchedule s = build_schedule(50, 1e-4, 0.02);

        DiffusionRng r1(123), r2(123);
        Tensor a = ancestral_sample(m, s, r1, 50);
        Tensor b = ancestral_sample(m, s, r2, 50);
        CHECK(a.shape() == std::vector<std::size_t>{8, 8, 1});
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

        CHECK_THROWS_AS(ancestral_sample(m, s, r1, 51), ValidationError);
    }
}
