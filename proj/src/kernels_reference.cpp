#include "spgan/kernels.hpp"

namespace spgan::kernels::reference {

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> out) {
    const int64_t ho = g.out_h(), wo = g.out_w();
    for (int64_t n = 0; n < g.batch; ++n) {
        for (int64_t co = 0; co < g.out_channels; ++co) {
            for (int64_t oy = 0; oy < ho; ++oy) {
                for (int64_t ox = 0; ox < wo; ++ox) {
                    T acc = bias.empty() ? T(0) : bias[co];
                    for (int64_t ci = 0; ci < g.in_channels; ++ci) {
                        for (int64_t ky = 0; ky < g.kernel_h; ++ky) {
                            const int64_t iy = oy * g.stride - g.padding + ky;
                            if (iy < 0 || iy >= g.in_h) continue;
                            for (int64_t kx = 0; kx < g.kernel_w; ++kx) {
                                const int64_t ix = ox * g.stride - g.padding + kx;
                                if (ix < 0 || ix >= g.in_w) continue;
                                acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                                       x[((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
                            }
                        }
                    }
                    out[((n * g.out_channels + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward(const Conv2dGeometry& g, std::span<const T> grad_out, std::span<const T> x,
                     std::span<const T> w, std::span<T> grad_x, std::span<T> grad_w,
                     std::span<T> grad_bias) {
    const int64_t ho = g.out_h(), wo = g.out_w();
    for (int64_t n = 0; n < g.batch; ++n) {
        for (int64_t co = 0; co < g.out_channels; ++co) {
            for (int64_t oy = 0; oy < ho; ++oy) {
                for (int64_t ox = 0; ox < wo; ++ox) {
                    const T go = grad_out[((n * g.out_channels + co) * ho + oy) * wo + ox];
                    if (!grad_bias.empty()) grad_bias[co] += go;
                    for (int64_t ci = 0; ci < g.in_channels; ++ci) {
                        for (int64_t ky = 0; ky < g.kernel_h; ++ky) {
                            const int64_t iy = oy * g.stride - g.padding + ky;
                            if (iy < 0 || iy >= g.in_h) continue;
                            for (int64_t kx = 0; kx < g.kernel_w; ++kx) {
                                const int64_t ix = ox * g.stride - g.padding + kx;
                                if (ix < 0 || ix >= g.in_w) continue;
                                const int64_t wi = ((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx;
                                const int64_t xi = ((n * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix;
                                if (!grad_w.empty()) grad_w[wi] += go * x[xi];
                                if (!grad_x.empty()) grad_x[xi] += go * w[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void linear_forward(int64_t n, int64_t in, int64_t out_dim, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias, std::span<T> out) {
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t o = 0; o < out_dim; ++o) {
            T acc = bias.empty() ? T(0) : bias[o];
            for (int64_t i = 0; i < in; ++i) acc += x[r * in + i] * w[o * in + i];
            out[r * out_dim + o] = acc;
        }
    }
}

template <typename T>
void linear_backward(int64_t n, int64_t in, int64_t out_dim, std::span<const T> grad_out,
                     std::span<const T> x, std::span<const T> w, std::span<T> grad_x,
                     std::span<T> grad_w, std::span<T> grad_bias) {
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t o = 0; o < out_dim; ++o) {
            const T go = grad_out[r * out_dim + o];
            if (!grad_bias.empty()) grad_bias[o] += go;
            for (int64_t i = 0; i < in; ++i) {
                if (!grad_w.empty()) grad_w[o * in + i] += go * x[r * in + i];
                if (!grad_x.empty()) grad_x[r * in + i] += go * w[o * in + i];
            }
        }
    }
}

#define SPGAN_INSTANTIATE(T)                                                                          \
    template void conv2d_forward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,     \
                                    std::span<const T>, std::span<T>);                                \
    template void conv2d_backward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,    \
                                     std::span<const T>, std::span<T>, std::span<T>, std::span<T>);    \
    template void linear_forward<T>(int64_t, int64_t, int64_t, std::span<const T>, std::span<const T>, \
                                    std::span<const T>, std::span<T>);                                \
    template void linear_backward<T>(int64_t, int64_t, int64_t, std::span<const T>,                   \
                                     std::span<const T>, std::span<const T>, std::span<T>,            \
                                     std::span<T>, std::span<T>);

SPGAN_INSTANTIATE(float)
SPGAN_INSTANTIATE(double)

#undef SPGAN_INSTANTIATE

}  // namespace spgan::kernels::reference
