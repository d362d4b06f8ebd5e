#pragma once

#include "dimel/numkernel/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace dimel::nk {

struct AdamWHyper {
    double learning_rate = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    void validate() const;
};

/// Reference to a trainable tensor together with its display name.
struct NamedParam {
    std::string name;
    Tensor2* value;
};

struct AdamWState {
    AdamWHyper hyper;
    std::vector<Tensor2> first_moment;
    std::vector<Tensor2> second_moment;
    std::size_t step = 0;
};

AdamWState make_adamw_state(const std::vector<NamedParam>& params, AdamWHyper hyper = {});

/// One decoupled-weight-decay Adam step:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
/// Every gradient is checked for NaN/Inf before anything is modified, so a
/// failed step leaves params and state untouched.
void adamw_step(const std::vector<NamedParam>& params, const std::vector<Tensor2>& grads,
                AdamWState& state);

} // namespace dimel::nk
