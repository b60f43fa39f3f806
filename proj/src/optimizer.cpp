#include "mocap/optimizer.hpp"

#include <cmath>

namespace mocap::num {

void OptimizerState::init(const NamedParams& params, double lr, long long steps, double wd) {
    base_lr = lr;
    total_steps = steps;
    weight_decay = wd;
    step = 0;
    m1.clear();
    m2.clear();
    for (const auto& [name, p] : params) {
        m1.emplace_back(p.size(), 0.0);
        m2.emplace_back(p.size(), 0.0);
    }
}

double OptimizerState::apply(NamedParams& params) {
    if (step >= total_steps)
        throw ContractError("adamw: step " + std::to_string(step) + " past total_steps " +
                            std::to_string(total_steps));
    if (m1.size() != params.size())
        throw ContractError("adamw: optimizer initialized for " + std::to_string(m1.size()) +
                            " parameters, got " + std::to_string(params.size()));
    const double lr = cosine_lr(base_lr, step, total_steps);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step) + 1.0);
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step) + 1.0);
    for (size_t pi = 0; pi < params.size(); pi++) {
        auto& [name, p] = params[pi];
        auto g = p.grad();
        auto v = p.data();
        auto& m = m1[pi];
        auto& s = m2[pi];
        for (int64_t i = 0; i < p.size(); i++) {
            if (!std::isfinite(g[i]))
                throw TrainingError("adamw: non-finite gradient for parameter '" + name + "'");
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            s[i] = beta2 * s[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double shat = s[i] / bc2;
            v[i] -= lr * (mhat / (std::sqrt(shat) + eps) + weight_decay * v[i]);
        }
    }
    step++;
    return lr;
}

}  // namespace mocap::num
