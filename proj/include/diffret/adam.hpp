#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "diffret/errors.hpp"
#include "diffret/tensor.hpp"

namespace diffret {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) {
            if (!p.requires_grad()) throw ContractError("Adam: parameter without requires_grad");
            m_.emplace_back(p.numel(), 0.0);
            v_.emplace_back(p.numel(), 0.0);
        }
    }

    // One update from the grads left by the last backward pass. A parameter
    // that never entered the graph counts as having zero gradient. Grads are
    // cleared afterwards so they cannot leak into the next step.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t p = 0; p < params_.size(); ++p) {
            auto data = params_[p].mutable_data();
            auto grad = params_[p].grad();
            for (size_t i = 0; i < data.size(); ++i) {
                const double g = grad.empty() ? 0.0 : grad[i];
                m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
                v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
                const double m_hat = m_[p][i] / bc1;
                const double v_hat = v_[p][i] / bc2;
                data[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            }
            params_[p].node()->grad.clear();
        }
    }

    int64_t steps() const { return t_; }

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace diffret
