#include <cmath>
#include <set>

#include "doctest.h"

#include "diffbp/dit.hpp"

using namespace diffbp;

namespace {

DiTConfig small_config(FeaturePooling pooling = FeaturePooling::cls_token) {
    DiTConfig cfg;
    cfg.image_h = 8;
    cfg.image_w = 8;
    cfg.channels = 1;
    cfg.patch_size = 2;
    cfg.hidden_dim = 16;
    cfg.depth = 2;
    cfg.num_heads = 2;
    cfg.mlp_ratio = 2;
    cfg.timesteps = 50;
    cfg.pooling = pooling;
    return cfg;
}

}  // namespace

TEST_SUITE("dit") {
    TEST_CASE("patchify layout for a 4x4 image with P=2") {
        Tensor x({4, 4, 1});
        for (std::size_t i = 0; i < 16; ++i) x.data()[i] = static_cast<float>(i);
        Tensor p = patchify(x, 2);
        REQUIRE(p.shape() == std::vector<std::size_t>{4, 4});
        // Token 0 covers pixels (0,0) (0,1) (1,0) (1,1).
        CHECK(p.data()[0] == 0.0f);
        CHECK(p.data()[1] == 1.0f);
        CHECK(p.data()[2] == 4.0f);
        CHECK(p.data()[3] == 5.0f);
        // Token 3 is the bottom-right patch.
        CHECK(p.data()[12] == 10.0f);
        CHECK(p.data()[15] == 15.0f);
    }

    TEST_CASE("patchify/unpatchify is a bitwise bijection") {
        DiffusionRng rng(4);
        for (std::size_t h : {4u, 8u})
            for (std::size_t w : {4u, 8u})
                for (std::size_t c : {1u, 3u})
                    for (std::size_t p : {1u, 2u, 4u}) {
                        Tensor x = Tensor::gaussian({h, w, c}, rng);
                        Tensor back = unpatchify(patchify(x, p), h, w, c, p);
                        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.data()[i] == x.data()[i]);
                    }
    }

    TEST_CASE("patchify rejects non-dividing patch size") {
        Tensor x({5, 4, 1});
        CHECK_THROWS_AS(patchify(x, 2), ShapeError);
        Tensor z({4, 4});
        CHECK_THROWS_AS(unpatchify(z, 4, 4, 1, 3), ShapeError);
        Tensor wrong({3, 4});
        CHECK_THROWS_AS(unpatchify(wrong, 4, 4, 1, 2), ShapeError);
    }

    TEST_CASE("sinusoidal embedding layout") {
        Tensor e0 = sinusoidal_embedding<float>(0, 8);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(e0.data()[i] == 0.0f);
            CHECK(e0.data()[4 + i] == 1.0f);
        }
        // First channel has frequency exactly 1.
        Tensor e3 = sinusoidal_embedding<float>(3, 8);
        CHECK(e3.data()[0] == doctest::Approx(std::sin(3.0)));
        CHECK(e3.data()[4] == doctest::Approx(std::cos(3.0)));
        CHECK_THROWS_AS(sinusoidal_embedding<float>(1, 7), ValidationError);
    }

    TEST_CASE("sinusoidal embeddings are pairwise distinct over 1..100") {
        const std::size_t dim = 32;
        std::vector<Tensor> embs;
        for (std::size_t t = 1; t <= 100; ++t) embs.push_back(sinusoidal_embedding<float>(t, dim));
        for (std::size_t a = 0; a < embs.size(); ++a)
            for (std::size_t b = a + 1; b < embs.size(); ++b) {
                double dist = 0;
                for (std::size_t i = 0; i < dim; ++i) {
                    const double d = embs[a].data()[i] - embs[b].data()[i];
                    dist += d * d;
                }
                CHECK(dist > 0.0);
            }
    }

    TEST_CASE("condition_vector: determinism, degeneration, finiteness") {
        DiffusionRng rng(9);
        DiTModel m = init_dit<float>(small_config(), rng);

        Tensor c1 = condition_vector(m, 7).value;
        Tensor c2 = condition_vector(m, 7).value;
        for (std::size_t i = 0; i < c1.numel(); ++i) CHECK(c1.data()[i] == c2.data()[i]);

        // Zero weights degrade the MLP to its output bias.
        DiTModel stub = m;
        stub.time_w1 = Tensor::zeros(stub.time_w1.shape());
        stub.time_w2 = Tensor::zeros(stub.time_w2.shape());
        stub.time_b2 = Tensor::full(stub.time_b2.shape(), 0.25f);
        Tensor cb = condition_vector(stub, 3).value;
        for (std::size_t i = 0; i < cb.numel(); ++i) CHECK(cb.data()[i] == 0.25f);

        for (std::size_t t = 1; t <= m.cfg.timesteps; ++t) {
            Tensor c = condition_vector(m, t).value;
            for (std::size_t i = 0; i < c.numel(); ++i) CHECK(std::isfinite(c.data()[i]));
        }
        CHECK_THROWS_AS(condition_vector(m, 0), ValidationError);
        CHECK_THROWS_AS(condition_vector(m, m.cfg.timesteps + 1), ValidationError);
    }

    TEST_CASE("adaln modulation cases") {
        DiffusionRng rng(21);
        const std::size_t d = 16;
        Tensor h = Tensor::gaussian({5, d}, rng);
        ConditioningVector c{Tensor::gaussian({1, d}, rng)};

        // Zero-init modulation: gamma = beta = 0 -> output identically zero.
        Tensor zero_out = adaln(h, c, Tensor::zeros({d, 2 * d}), Tensor::zeros({2 * d}));
        for (std::size_t i = 0; i < zero_out.numel(); ++i) CHECK(zero_out.data()[i] == 0.0f);

        // gamma = 1, beta = 0 via the bias -> plain layer norm.
        Tensor bias({2 * d});
        for (std::size_t i = 0; i < d; ++i) bias.data()[i] = 1.0f;
        Tensor ident = adaln(h, c, Tensor::zeros({d, 2 * d}), bias);
        Tensor ln = layer_norm(h);
        for (std::size_t i = 0; i < ident.numel(); ++i) CHECK(ident.data()[i] == doctest::Approx(ln.data()[i]));

        // gamma = 0, beta = b -> every token row equals b.
        Tensor shift({2 * d});
        for (std::size_t i = 0; i < d; ++i) shift.data()[d + i] = 0.5f + 0.1f * static_cast<float>(i);
        Tensor shifted = adaln(h, c, Tensor::zeros({d, 2 * d}), shift);
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t i = 0; i < d; ++i)
                CHECK(shifted.data()[r * d + i] == shift.data()[d + i]);
    }

    TEST_CASE("freshly initialized block is the identity") {
        DiffusionRng rng(33);
        DiTModel m = init_dit<float>(small_config(), rng);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor h = Tensor::gaussian({m.cfg.seq_len(), m.cfg.hidden_dim}, rng, 1.5);
            ConditioningVector c = condition_vector(m, 1 + static_cast<std::size_t>(trial) % m.cfg.timesteps);
            Tensor out = dit_block(h, c, m.blocks[0], m.cfg.num_heads);
            for (std::size_t i = 0; i < h.numel(); ++i)
                CHECK(std::abs(out.data()[i] - h.data()[i]) < 1e-6f);
        }
    }

    TEST_CASE("single-token attention reduces to the value projection") {
        DiffusionRng rng(55);
        DiTConfig cfg = small_config();
        DiTModel m = init_dit<float>(cfg, rng);
        randomize_parameters(m, rng);
        const std::size_t d = cfg.hidden_dim;
        Tensor h = Tensor::gaussian({1, d}, rng);

        Tensor out = multi_head_self_attention(h, m.blocks[0], cfg.num_heads);

        // With one token, softmax over the single key is 1, so the context is
        // exactly the value projection.
        Tensor qkv = add_rowvec(matmul(h, m.blocks[0].qkv_w), m.blocks[0].qkv_b);
        Tensor v = slice_cols(qkv, 2 * d, 3 * d);
        Tensor want = add_rowvec(matmul(v, m.blocks[0].attn_out_w), m.blocks[0].attn_out_b);
        for (std::size_t i = 0; i < d; ++i)
            CHECK(out.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-5));
    }

    TEST_CASE("block commutes with token permutation") {
        DiffusionRng rng(66);
        DiTConfig cfg = small_config();
        DiTModel m = init_dit<float>(cfg, rng);
        randomize_parameters(m, rng);
        const std::size_t n = 6, d = cfg.hidden_dim;
        Tensor h = Tensor::gaussian({n, d}, rng);
        ConditioningVector c = condition_vector(m, 5);

        const std::size_t perm[n] = {3, 0, 5, 1, 4, 2};
        Tensor hp({n, d});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) hp.data()[r * d + j] = h.data()[perm[r] * d + j];

        Tensor out = dit_block(h, c, m.blocks[0], cfg.num_heads);
        Tensor outp = dit_block(hp, c, m.blocks[0], cfg.num_heads);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j)
                CHECK(outp.data()[r * d + j] == doctest::Approx(out.data()[perm[r] * d + j]).epsilon(1e-4));
    }

    TEST_CASE("dit_forward preserves shape over a config grid") {
        DiffusionRng rng(77);
        for (std::size_t img : {4u, 8u})
            for (std::size_t p : {2u, 4u})
                for (std::size_t depth : {1u, 2u})
                    for (FeaturePooling pooling : {FeaturePooling::cls_token, FeaturePooling::mean_pool}) {
                        DiTConfig cfg;
                        cfg.image_h = cfg.image_w = img;
                        cfg.channels = 1;
                        cfg.patch_size = p;
                        cfg.hidden_dim = 8;
                        cfg.depth = depth;
                        cfg.num_heads = 2;
                        cfg.mlp_ratio = 2;
                        cfg.timesteps = 10;
                        cfg.pooling = pooling;
                        DiTModel m = init_dit<float>(cfg, rng);
                        randomize_parameters(m, rng);
                        Tensor x = Tensor::gaussian({img, img, 1}, rng);
                        Tensor out = dit_forward(m, x, 3);
                        CHECK(out.shape() == x.shape());
                        for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::isfinite(out.data()[i]));
                    }
    }

    TEST_CASE("freshly initialized model outputs zero everywhere") {
        DiffusionRng rng(88);
        DiTModel m = init_dit<float>(small_config(), rng);
        Tensor x = Tensor::gaussian({8, 8, 1}, rng, 2.0);
        Tensor out = dit_forward(m, x, 13);
        for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out.data()[i]) < 1e-6f);
    }

    TEST_CASE("dit_forward is deterministic and validates input shape") {
        DiffusionRng rng(99);
        DiTModel m = init_dit<float>(small_config(), rng);
        randomize_parameters(m, rng);
        Tensor x = Tensor::gaussian({8, 8, 1}, rng);
        Tensor a = dit_forward(m, x, 4);
        Tensor b = dit_forward(m, x, 4);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

        Tensor bad = Tensor::gaussian({4, 8, 1}, rng);
        CHECK_THROWS_AS(dit_forward(m, bad, 4), ShapeError);
    }

    TEST_CASE("extract_features: contract, shape, determinism, pooling") {
        DiffusionRng rng(111);
        DiTModel m = init_dit<float>(small_config(), rng);
        randomize_parameters(m, rng);
        Tensor x = Tensor::gaussian({8, 8, 1}, rng);

        CHECK_THROWS_AS(extract_features(m, x, 1), ContractError);
        freeze(m);
        Tensor f1 = extract_features(m, x, 1);
        REQUIRE(f1.shape() == std::vector<std::size_t>{m.cfg.hidden_dim});
        Tensor f2 = extract_features(m, x, 1);
        for (std::size_t i = 0; i < f1.numel(); ++i) CHECK(f1.data()[i] == f2.data()[i]);
        CHECK_FALSE(f1.requires_grad());

        // Mean pooling over a single token equals that token's vector.
        DiTConfig one_token;
        one_token.image_h = one_token.image_w = 4;
        one_token.patch_size = 4;
        one_token.hidden_dim = 8;
        one_token.depth = 1;
        one_token.num_heads = 2;
        one_token.mlp_ratio = 2;
        one_token.timesteps = 10;
        one_token.pooling = FeaturePooling::mean_pool;
        DiTModel mp = init_dit<float>(one_token, rng);
        randomize_parameters(mp, rng);
        freeze(mp);
        Tensor img = Tensor::gaussian({4, 4, 1}, rng);
        Tensor feat = extract_features(mp, img, 1);
        GradPause pause;
        Tensor tokens = encoder_tokens(mp, img, 1);
        REQUIRE(tokens.dim(0) == 1);
        for (std::size_t i = 0; i < feat.numel(); ++i) CHECK(feat.data()[i] == tokens.data()[i]);
    }

    TEST_CASE("freeze is idempotent and keeps parameters off tapes") {
        DiffusionRng rng(123);
        DiTModel m = init_dit<float>(small_config(), rng);
        freeze(m);
        const std::uint64_t sum1 = parameter_checksum(m);
        freeze(m);
        CHECK(parameter_checksum(m) == sum1);
        Tensor x = Tensor::gaussian({8, 8, 1}, rng);
        Tensor out = dit_forward(m, x, 2);
        CHECK_FALSE(out.requires_grad());
    }

    TEST_CASE("config validation rejects invalid geometry") {
        DiTConfig cfg = small_config();
        cfg.patch_size = 3;  // does not divide 8
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = small_config();
        cfg.hidden_dim = 15;  // odd
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = small_config();
        cfg.num_heads = 3;  // does not divide 16
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
    }
}
