#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spgan/params.hpp"

namespace spgan {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    int64_t step = 0;
    std::vector<std::vector<float>> m;  // first moments, one per parameter
    std::vector<std::vector<float>> v;  // second moments
};

// Bias-corrected Adam update in place; moments are allocated on first use.
// Throws UsageError when the parameter, gradient and moment layouts disagree.
void adam_step(std::span<Tensor> params, std::span<const std::span<const float>> grads, AdamState& state);
// Uses each parameter's own gradient buffer.
void adam_step(std::span<Tensor> params, AdamState& state);

// Parameters of a store in order (handles, sharing storage).
std::vector<Tensor> tensors_of(const ParamStore& store);

}  // namespace spgan
