#pragma once

// Raw conv / matmul kernels on flat row-major buffers.
//
// Two implementations share one signature set:
//   kernels::reference  straightforward serial loops, kept as the test oracle
//   kernels::           im2col + blocked loops, OpenMP-parallel over independent
//                       output slices
//
// The parallel kernels never split a reduction across threads, so every output value
// is summed in the same order whatever the thread count.

#include <cstdint>
#include <span>

namespace spgan::kernels {

struct Conv2dGeometry {
    int64_t batch = 0;
    int64_t in_channels = 0;
    int64_t in_h = 0;
    int64_t in_w = 0;
    int64_t out_channels = 0;
    int64_t kernel_h = 0;
    int64_t kernel_w = 0;
    int64_t stride = 1;
    int64_t padding = 0;

    int64_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
    int64_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
    int64_t patch_size() const { return in_channels * kernel_h * kernel_w; }
};

// out[N,Co,Ho,Wo] = bias + cross-correlation(x, w). bias may be empty.
template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> out);

// Accumulates into grad_x / grad_w / grad_bias. Empty spans are skipped.
template <typename T>
void conv2d_backward(const Conv2dGeometry& g, std::span<const T> grad_out, std::span<const T> x,
                     std::span<const T> w, std::span<T> grad_x, std::span<T> grad_w,
                     std::span<T> grad_bias);

// out[N,O] = x[N,I] * w[O,I]^T + bias[O].
template <typename T>
void linear_forward(int64_t n, int64_t in, int64_t out_dim, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias, std::span<T> out);

template <typename T>
void linear_backward(int64_t n, int64_t in, int64_t out_dim, std::span<const T> grad_out,
                     std::span<const T> x, std::span<const T> w, std::span<T> grad_x,
                     std::span<T> grad_w, std::span<T> grad_bias);

namespace reference {

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> out);

template <typename T>
void conv2d_backward(const Conv2dGeometry& g, std::span<const T> grad_out, std::span<const T> x,
                     std::span<const T> w, std::span<T> grad_x, std::span<T> grad_w,
                     std::span<T> grad_bias);

template <typename T>
void linear_forward(int64_t n, int64_t in, int64_t out_dim, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias, std::span<T> out);

template <typename T>
void linear_backward(int64_t n, int64_t in, int64_t out_dim, std::span<const T> grad_out,
                     std::span<const T> x, std::span<const T> w, std::span<T> grad_x,
                     std::span<T> grad_w, std::span<T> grad_bias);

}  // namespace reference

// Number of threads the parallel kernels use (OpenMP wrapper; 1 without OpenMP).
int max_threads();
void set_num_threads(int n);

}  // namespace spgan::kernels
