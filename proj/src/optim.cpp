#include "spgan/optim.hpp"

#include <cmath>

namespace spgan {

void adam_step(std::span<Tensor> params, std::span<const std::span<const float>> grads, AdamState& state) {
    if (params.size() != grads.size())
        throw UsageError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    if (state.m.empty() && state.v.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
            state.v.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw UsageError("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                         " moment arrays for " + std::to_string(params.size()) + " parameters");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto n = static_cast<size_t>(params[i].numel());
        if (grads[i].size() != n || state.m[i].size() != n || state.v[i].size() != n)
            throw UsageError("adam_step: shape mismatch at parameter " + std::to_string(i) + " (" +
                             shape_str(params[i].shape()) + ")");
    }

    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto g = grads[i];
        for (size_t k = 0; k < p.size(); ++k) {
            const double gk = g[k];
            const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
            const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
            m[k] = static_cast<float>(mk);
            v[k] = static_cast<float>(vk);
            const double update = c.lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
            p[k] = static_cast<float>(p[k] - update);
        }
    }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
    std::vector<std::span<const float>> grads;
    grads.reserve(params.size());
    for (auto& p : params) grads.push_back(p.grad());
    adam_step(params, grads, state);
}

std::vector<Tensor> tensors_of(const ParamStore& store) {
    std::vector<Tensor> out;
    out.reserve(store.size());
    for (const auto& [name, t] : store.entries()) out.push_back(t);
    return out;
}

}  // namespace spgan
