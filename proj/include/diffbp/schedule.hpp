#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "diffbp/errors.hpp"
#include "diffbp/rng.hpp"
#include "diffbp/tensor.hpp"

namespace diffbp {

// The {beta_t, alpha_t, alpha_bar_t} tables over T timesteps. Kept in double
// so the identity sqrt(abar)^2 + (1 - abar) == 1 holds to machine precision;
// values are cast at the point of use.
struct NoiseSchedule {
    std::size_t timesteps = 0;
    std::vector<double> betas;       // beta_t in (0,1), nondecreasing (linear)
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s, strictly decreasing

    double beta(std::size_t t) const { return betas[check_t(t) - 1]; }
    double alpha(std::size_t t) const { return alphas[check_t(t) - 1]; }
    double alpha_bar(std::size_t t) const { return alpha_bars[check_t(t) - 1]; }

    std::size_t check_t(std::size_t t) const {
        if (t < 1 || t > timesteps)
            throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(timesteps) + "]");
        return t;
    }
};

// Linear beta schedule, endpoints inclusive (a single step takes beta_start).
NoiseSchedule build_schedule(std::size_t timesteps, double beta_start, double beta_end);

// Uniform draw over {1, .., T}.
std::size_t sample_timestep(DiffusionRng& rng, std::size_t timesteps);

// Closed-form corruption x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
// Inputs to the model, not through it: never taped.
template <typename S>
TensorT<S> forward_sample(const TensorT<S>& x0, std::size_t t, const TensorT<S>& eps, const NoiseSchedule& s) {
    if (x0.shape() != eps.shape())
        throw ShapeError("forward_sample: noise shape " + shape_to_string(eps.shape()) +
                         " does not match image shape " + shape_to_string(x0.shape()));
    const double abar = s.alpha_bar(t);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    TensorT<S> out(x0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.data()[i] = static_cast<S>(signal * x0.data()[i] + noise * eps.data()[i]);
    return out;
}

}  // namespace diffbp
