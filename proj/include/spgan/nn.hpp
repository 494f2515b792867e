#pragma once

// Normalization, noise injection and adaptive instance normalization.

#include "spgan/ops.hpp"
#include "spgan/rng.hpp"

namespace spgan::nn {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct BasicBatchNormState {
    BasicTensor<T> gamma;         // [C], trainable, init 1
    BasicTensor<T> beta;          // [C], trainable, init 0
    BasicTensor<T> running_mean;  // [C], buffer
    BasicTensor<T> running_var;   // [C], buffer, >= 0
    double momentum = kBatchNormMomentum;
    double eps = kNormEps;

    static BasicBatchNormState create(int64_t channels);
    int64_t channels() const { return gamma.numel(); }
};
using BatchNormState = BasicBatchNormState<float>;

template <typename T>
struct BasicNoiseParams {
    BasicTensor<T> scale;  // [C], trainable, init 0

    static BasicNoiseParams create(int64_t channels) {
        BasicNoiseParams p;
        p.scale = BasicTensor<T>::zeros(Shape{channels});
        p.scale.set_requires_grad(true);
        return p;
    }
};
using NoiseParams = BasicNoiseParams<float>;

// Training mode normalizes with batch statistics over (N,H,W) and updates the running
// statistics; eval mode uses the running statistics. Requires N >= 2 in training mode.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, BasicBatchNormState<T>& state, bool training);

// Per (sample, channel): (x - mean) / sqrt(var + eps), statistics over H*W >= 2.
template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, double eps = kNormEps);

// out = x + scale[c] * noise[n,0,h,w]; noise is [N,1,H,W] and shared across channels.
template <typename T>
BasicTensor<T> inject_noise(const BasicTensor<T>& x, const BasicNoiseParams<T>& params,
                            const BasicTensor<T>& noise);

// Draws the [N,1,H,W] standard-normal noise from rng.
template <typename T>
BasicTensor<T> inject_noise(const BasicTensor<T>& x, const BasicNoiseParams<T>& params, Rng& rng);

template <typename T>
BasicTensor<T> sample_noise(const Shape& like, Rng& rng);

// out[n,c] = y_scale[n,c] * instance_norm(x)[n,c] + y_bias[n,c].
template <typename T>
BasicTensor<T> adain(const BasicTensor<T>& x, const BasicTensor<T>& y_scale, const BasicTensor<T>& y_bias,
                     double eps = kNormEps);

}  // namespace spgan::nn
