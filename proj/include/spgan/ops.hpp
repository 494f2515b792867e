#pragma once

// Differentiable tensor operations. Each op computes its forward value eagerly and,
// when a tape is active and an input requires a gradient, records its backward rule.
//
// All ops are instantiated for float (training) and double (gradient checking).

#include <optional>

#include "spgan/tensor.hpp"

namespace spgan {

enum class ActivationKind { leaky_relu, relu, tanh, sigmoid };

struct Activation {
    ActivationKind kind = ActivationKind::leaky_relu;
    double slope = 0.2;  // leaky_relu only
};

// Cross-correlation. x [N,Ci,H,W], weight [Co,Ci,kH,kW], bias [Co] or undefined.
// The output size must divide exactly.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride = 1, int padding = 0);

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, int factor);

// Window i along an axis of length L covers [floor(i*L/out), ceil((i+1)*L/out)).
template <typename T>
BasicTensor<T> adaptive_avg_pool(const BasicTensor<T>& x, int out_hw);

// x [N,Din], weight [Dout,Din], bias [Dout] or undefined.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

// Elementwise. The derivative at exactly 0 is the negative-side slope.
template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, const Activation& act);

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope = 0.2) {
    return activation(x, Activation{ActivationKind::leaky_relu, slope});
}
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    return activation(x, Activation{ActivationKind::relu, 0.0});
}
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
    return activation(x, Activation{ActivationKind::tanh, 0.0});
}
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    return activation(x, Activation{ActivationKind::sigmoid, 0.0});
}

// log(1 + exp(x)), evaluated without overflow.
template <typename T>
BasicTensor<T> softplus(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, double factor);
template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, double value);
template <typename T>
BasicTensor<T> square(const BasicTensor<T>& a);

// Scalar reductions, shape [1].
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);

// Columns [begin, end) of a [N,D] matrix.
template <typename T>
BasicTensor<T> slice_columns(const BasicTensor<T>& a, int64_t begin, int64_t end);

// out[n,c,:,:] = gate[n,c] * x[n,c,:,:]; gate holds N*C values ([N,C] or [N,C,1,1]).
template <typename T>
BasicTensor<T> channel_gate(const BasicTensor<T>& x, const BasicTensor<T>& gate);

// Repeats a [1,...] tensor n times along the batch axis.
template <typename T>
BasicTensor<T> broadcast_batch(const BasicTensor<T>& a, int64_t n);

}  // namespace spgan
