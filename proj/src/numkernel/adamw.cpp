#include "dimel/numkernel/adamw.hpp"

#include "dimel/errors.hpp"

#include <cmath>

namespace dimel::nk {

void AdamWHyper::validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigError("adamw betas must lie in (0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("adamw eps must be positive");
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
        throw ConfigError("adamw learning rate and weight decay must be non-negative");
    }
}

AdamWState make_adamw_state(const std::vector<NamedParam>& params, AdamWHyper hyper) {
    hyper.validate();
    AdamWState state;
    state.hyper = hyper;
    for (const NamedParam& p : params) {
        state.first_moment.emplace_back(p.value->rows(), p.value->cols());
        state.second_moment.emplace_back(p.value->rows(), p.value->cols());
    }
    return state;
}

void adamw_step(const std::vector<NamedParam>& params, const std::vector<Tensor2>& grads,
                AdamWState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw DimensionError("adamw: " + std::to_string(params.size()) + " params, " +
                             std::to_string(grads.size()) + " grads, " +
                             std::to_string(state.first_moment.size()) + " state slots");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor2& p = *params[i].value;
        if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols() ||
            state.first_moment[i].rows() != p.rows() || state.first_moment[i].cols() != p.cols()) {
            throw DimensionError("adamw: shape mismatch for parameter '" + params[i].name + "'");
        }
        if (!grads[i].all_finite()) {
            throw TrainingError("non-finite gradient for parameter '" + params[i].name + "'");
        }
    }

    const AdamWHyper& h = state.hyper;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(h.beta1, t);
    const double correction2 = 1.0 - std::pow(h.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& w = params[i].value->data();
        const auto& g = grads[i].data();
        auto& m = state.first_moment[i].data();
        auto& v = state.second_moment[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            w[j] -= h.learning_rate * (m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * w[j]);
        }
    }
}

} // namespace dimel::nk
