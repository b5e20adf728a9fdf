#include "diffbp/adamw.hpp"

#include <cmath>

namespace diffbp {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [name, p] : params_) {
        m_.emplace_back(p.numel(), 0.0f);
        v_.emplace_back(p.numel(), 0.0f);
    }
}

void AdamW::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = params_[k].second;
        if (!p.has_grad())
            throw ContractError("adamw: missing gradient for parameter '" + params_[k].first + "'");
        const std::vector<float>& g = p.grad();
        float* w = p.data();
        float* m = m_[k].data();
        float* v = v_[k].data();
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g[i];
            const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            w[i] = static_cast<float>(w[i] - cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                                        cfg_.weight_decay * w[i]));
        }
        p.clear_grad();
    }
}

void AdamW::restore_state(const std::vector<std::vector<float>>& m, const std::vector<std::vector<float>>& v,
                          std::uint64_t step) {
    if (m.size() != m_.size() || v.size() != v_.size())
        throw ContractError("adamw: optimizer state does not match parameter count");
    for (std::size_t k = 0; k < m_.size(); ++k) {
        if (m[k].size() != m_[k].size() || v[k].size() != v_[k].size())
            throw ContractError("adamw: optimizer state shape mismatch for '" + params_[k].first + "'");
        m_[k] = m[k];
        v_[k] = v[k];
    }
    step_ = step;
}

}  // namespace diffbp
