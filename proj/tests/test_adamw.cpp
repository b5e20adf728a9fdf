#include <cmath>

#include "doctest.h"

#include "diffbp/adamw.hpp"

using namespace diffbp;

TEST_SUITE("adamw") {
    TEST_CASE("first step matches the hand-evaluated update") {
        // w=0, g=1, lr=0.01, defaults, wd=0: m_hat = 1, v_hat = 1, w -> -0.01.
        Tensor w({1}, {0.0f});
        w.set_requires_grad(true);
        AdamWConfig cfg;
        cfg.lr = 0.01;
        cfg.weight_decay = 0.0;
        AdamW opt({{"w", w}}, cfg);
        w.node()->ensure_grad()[0] = 1.0f;
        opt.step();
        CHECK(w.data()[0] == doctest::Approx(-0.01).epsilon(1e-5));
        CHECK(opt.step_count() == 1);
        CHECK_FALSE(w.has_grad());  // step clears gradients
    }

    TEST_CASE("zero gradient with zero decay leaves weights unchanged") {
        Tensor w({3}, {0.5f, -0.25f, 1.0f});
        AdamWConfig cfg;
        cfg.weight_decay = 0.0;
        AdamW opt({{"w", w}}, cfg);
        w.node()->ensure_grad();
        opt.step();
        CHECK(w.data()[0] == 0.5f);
        CHECK(w.data()[1] == -0.25f);
        CHECK(w.data()[2] == 1.0f);
    }

    TEST_CASE("zero gradient with decay applies pure decoupled decay") {
        Tensor w({1}, {2.0f});
        AdamWConfig cfg;
        cfg.lr = 0.1;
        cfg.weight_decay = 0.5;
        AdamW opt({{"w", w}}, cfg);
        w.node()->ensure_grad();
        opt.step();
        // w <- w (1 - lr*wd) = 2 * 0.95
        CHECK(w.data()[0] == doctest::Approx(1.9).epsilon(1e-6));
    }

    TEST_CASE("missing gradient raises a contract error") {
        Tensor w({2});
        AdamW opt({{"w", w}}, AdamWConfig{});
        CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("'w'"), ContractError);
    }

    TEST_CASE("wd=0 matches hand-iterated Adam on a quadratic") {
        // Minimize 0.5*(w-3)^2, gradient w-3.
        Tensor w({1}, {0.0f});
        AdamWConfig cfg;
        cfg.lr = 0.05;
        cfg.weight_decay = 0.0;
        AdamW opt({{"w", w}}, cfg);

        double wm = 0.0, m = 0.0, v = 0.0;
        for (int step = 1; step <= 200; ++step) {
            const float g = w.data()[0] - 3.0f;
            w.node()->ensure_grad()[0] = g;
            opt.step();

            const double gd = wm - 3.0;
            m = 0.9 * m + 0.1 * gd;
            v = 0.999 * v + 0.001 * gd * gd;
            const double mh = m / (1.0 - std::pow(0.9, step));
            const double vh = v / (1.0 - std::pow(0.999, step));
            wm -= 0.05 * mh / (std::sqrt(vh) + 1e-8);

            CHECK(w.data()[0] == doctest::Approx(wm).epsilon(1e-3));
        }
        // Both trajectories approach the optimum.
        CHECK(std::abs(w.data()[0] - 3.0) < 0.5);
    }
}
