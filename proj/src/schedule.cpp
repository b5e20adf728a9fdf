#include "diffbp/schedule.hpp"

namespace diffbp {

NoiseSchedule build_schedule(std::size_t timesteps, double beta_start, double beta_end) {
    if (timesteps < 1) throw ValidationError("schedule needs at least one timestep");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ValidationError("beta range must satisfy 0 < beta_start <= beta_end < 1, got [" +
                              std::to_string(beta_start) + ", " + std::to_string(beta_end) + "]");
    NoiseSchedule s;
    s.timesteps = timesteps;
    s.betas.resize(timesteps);
    s.alphas.resize(timesteps);
    s.alpha_bars.resize(timesteps);
    double running = 1.0;
    for (std::size_t i = 0; i < timesteps; ++i) {
        const double frac = timesteps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(timesteps - 1);
        s.betas[i] = beta_start + (beta_end - beta_start) * frac;
        s.alphas[i] = 1.0 - s.betas[i];
        running *= s.alphas[i];
        s.alpha_bars[i] = running;
    }
    return s;
}

std::size_t sample_timestep(DiffusionRng& rng, std::size_t timesteps) {
    if (timesteps < 1) throw ValidationError("sample_timestep: T must be >= 1");
    return 1 + static_cast<std::size_t>(rng.uniform_below(timesteps));
}

}  // namespace diffbp
