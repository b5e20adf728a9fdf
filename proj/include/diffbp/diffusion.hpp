#pragma once

#include <cmath>
#include <utility>

#include "diffbp/dit.hpp"
#include "diffbp/rng.hpp"
#include "diffbp/schedule.hpp"
#include "diffbp/tensor.hpp"

namespace diffbp {

// Pre-training loss with the noise supplied explicitly: mean squared error
// between the true and predicted noise, mean over elements. The explicit-eps
// form is the deterministic core that gradient checks wrap.
template <typename S, typename F>
TensorT<S> denoise_loss_given(F&& eps_theta, const TensorT<S>& x0, std::size_t t, const TensorT<S>& eps,
                              const NoiseSchedule& s) {
    TensorT<S> xt = forward_sample(x0, t, eps, s);
    TensorT<S> pred = eps_theta(xt, t);
    return mse(pred, eps);
}

template <typename S, typename F>
TensorT<S> denoise_loss_fn(F&& eps_theta, const TensorT<S>& x0, std::size_t t, DiffusionRng& rng,
                           const NoiseSchedule& s) {
    TensorT<S> eps = TensorT<S>::gaussian(x0.shape(), rng);
    return denoise_loss_given(std::forward<F>(eps_theta), x0, t, eps, s);
}

template <typename S>
TensorT<S> denoise_loss(const DiTModelT<S>& m, const TensorT<S>& x0, std::size_t t, DiffusionRng& rng,
                        const NoiseSchedule& s) {
    return denoise_loss_fn([&](const TensorT<S>& xt, std::size_t tt) { return dit_forward(m, xt, tt); }, x0, t, rng,
                           s);
}

// One reverse step chain starting from a given x_t:
//   x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) * eps_theta(x_t, t)) / sqrt(alpha_t) + sigma_t z
// with sigma_t = sqrt(beta_t) and z = 0 at t = 1. Verification-only; no tape.
template <typename S, typename F>
TensorT<S> ancestral_sample_from(F&& eps_theta, const NoiseSchedule& s, const TensorT<S>& x_start,
                                 std::size_t t_start, DiffusionRng& rng) {
    s.check_t(t_start);
    GradPause pause;
    TensorT<S> x = x_start.clone();
    for (std::size_t t = t_start; t >= 1; --t) {
        TensorT<S> pred = eps_theta(x, t);
        const double eps_coef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
        const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(t));
        const double sigma = std::sqrt(s.beta(t));
        for (std::size_t i = 0; i < x.numel(); ++i) {
            double v = (static_cast<double>(x.data()[i]) - eps_coef * static_cast<double>(pred.data()[i])) *
                       inv_sqrt_alpha;
            if (t > 1) v += sigma * rng.gaussian();
            x.data()[i] = static_cast<S>(v);
        }
    }
    return x;
}

template <typename S, typename F>
TensorT<S> ancestral_sample(F&& eps_theta, const NoiseSchedule& s, DiffusionRng& rng, std::size_t steps,
                            std::vector<std::size_t> shape) {
    if (steps < 1 || steps > s.timesteps)
        throw ValidationError("ancestral_sample: steps must lie in [1, T], got " + std::to_string(steps));
    TensorT<S> x = TensorT<S>::gaussian(std::move(shape), rng);
    return ancestral_sample_from(std::forward<F>(eps_theta), s, x, steps, rng);
}

template <typename S>
TensorT<S> ancestral_sample(const DiTModelT<S>& m, const NoiseSchedule& s, DiffusionRng& rng, std::size_t steps) {
    return ancestral_sample<S>([&](const TensorT<S>& xt, std::size_t t) { return dit_forward(m, xt, t); }, s, rng,
                               steps, {m.cfg.image_h, m.cfg.image_w, m.cfg.channels});
}

}  // namespace diffbp
