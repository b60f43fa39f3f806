#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mocap/tensor.hpp"

namespace mocap::num {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline double cosine_lr(double base_lr, long long step, long long total_steps) {
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
}

// AdamW with decoupled weight decay and a cosine-decayed learning rate.
struct OptimizerState {
    double base_lr = 1e-5;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long step = 0;  // steps taken so far; lr is evaluated at this value
    long long total_steps = 1;
    std::vector<std::vector<double>> m1, m2;  // first/second moments per parameter

    void init(const NamedParams& params, double base_lr, long long total_steps,
              double weight_decay = 0.01);

    // One update over all parameters; reads grads, leaves them in place
    // (caller zeroes). Returns the learning rate used.
    double apply(NamedParams& params);
};

}  // namespace mocap::num
