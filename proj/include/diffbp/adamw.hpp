#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "diffbp/errors.hpp"
#include "diffbp/tensor.hpp"

namespace diffbp {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay:
//   w <- w - lr * ( m_hat / (sqrt(v_hat) + eps) + weight_decay * w )
// Moment arrays mirror the parameter shapes; step() clears gradients.
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg);

    void step();

    std::uint64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

    // Checkpoint access. Moment vectors are keyed by parameter name in
    // construction order.
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    const std::vector<std::vector<float>>& moments1() const { return m_; }
    const std::vector<std::vector<float>>& moments2() const { return v_; }
    void restore_state(const std::vector<std::vector<float>>& m, const std::vector<std::vector<float>>& v,
                       std::uint64_t step);

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::vector<float>> m_, v_;
    std::uint64_t step_ = 0;
    AdamWConfig cfg_;
};

}  // namespace diffbp
