#include "spgan/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spgan::kernels {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(std::max(1, n));
#else
    (void)n;
#endif
}

namespace {

// Fixed four-way split keeps the summation order independent of the vector width.
template <typename T>
T dot(const T* a, const T* b, int64_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

template <typename T>
T sum(const T* a, int64_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
    }
    for (; i < n; ++i) s0 += a[i];
    return (s0 + s1) + (s2 + s3);
}

bool is_pointwise(const Conv2dGeometry& g) {
    return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

// col[k, p] with k = (ci*kh + ky)*kw + kx and p = oy*wo + ox; padded taps are zero.
template <typename T>
void im2col(const Conv2dGeometry& g, const T* x, T* col) {
    const int64_t ho = g.out_h(), wo = g.out_w(), p_count = ho * wo;
    for (int64_t ci = 0; ci < g.in_channels; ++ci) {
        const T* plane = x + ci * g.in_h * g.in_w;
        for (int64_t ky = 0; ky < g.kernel_h; ++ky) {
            for (int64_t kx = 0; kx < g.kernel_w; ++kx) {
                T* row = col + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * p_count;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * g.stride - g.padding + ky;
                    T* dst = row + oy * wo;
                    if (iy < 0 || iy >= g.in_h) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = plane + iy * g.in_w;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * g.stride - g.padding + kx;
                        dst[ox] = (ix < 0 || ix >= g.in_w) ? T(0) : src[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const Conv2dGeometry& g, const T* col, T* x) {
    const int64_t ho = g.out_h(), wo = g.out_w(), p_count = ho * wo;
    for (int64_t ci = 0; ci < g.in_channels; ++ci) {
        T* plane = x + ci * g.in_h * g.in_w;
        for (int64_t ky = 0; ky < g.kernel_h; ++ky) {
            for (int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const T* row = col + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * p_count;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * g.stride - g.padding + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    T* dst = plane + iy * g.in_w;
                    const T* src = row + oy * wo;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * g.stride - g.padding + kx;
                        if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> out) {
    const int64_t p_count = g.out_h() * g.out_w();
    const int64_t k_count = g.patch_size();
    const int64_t in_plane = g.in_channels * g.in_h * g.in_w;
    const bool pointwise = is_pointwise(g);

#pragma omp parallel
    {
        std::vector<T> col(pointwise ? 0 : static_cast<size_t>(k_count * p_count));
#pragma omp for schedule(static)
        for (int64_t n = 0; n < g.batch; ++n) {
            const T* src = x.data() + n * in_plane;
            if (!pointwise) im2col(g, src, col.data());
            const T* c = pointwise ? src : col.data();
            T* dst = out.data() + n * g.out_channels * p_count;
            for (int64_t co = 0; co < g.out_channels; ++co) {
                T* o = dst + co * p_count;
                std::fill(o, o + p_count, bias.empty() ? T(0) : bias[co]);
                const T* wr = w.data() + co * k_count;
                for (int64_t k = 0; k < k_count; ++k) {
                    const T wv = wr[k];
                    const T* cr = c + k * p_count;
                    for (int64_t p = 0; p < p_count; ++p) o[p] += wv * cr[p];
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward(const Conv2dGeometry& g, std::span<const T> grad_out, std::span<const T> x,
                     std::span<const T> w, std::span<T> grad_x, std::span<T> grad_w,
                     std::span<T> grad_bias) {
    const int64_t p_count = g.out_h() * g.out_w();
    const int64_t k_count = g.patch_size();
    const int64_t in_plane = g.in_channels * g.in_h * g.in_w;
    const int64_t out_plane = g.out_channels * p_count;
    const bool pointwise = is_pointwise(g);

    if (!grad_w.empty() || !grad_bias.empty()) {
        std::vector<T> cols;
        if (!grad_w.empty() && !pointwise) {
            cols.resize(static_cast<size_t>(g.batch * k_count * p_count));
#pragma omp parallel for schedule(static)
            for (int64_t n = 0; n < g.batch; ++n) {
                im2col(g, x.data() + n * in_plane, cols.data() + n * k_count * p_count);
            }
        }
#pragma omp parallel for schedule(static)
        for (int64_t co = 0; co < g.out_channels; ++co) {
            for (int64_t n = 0; n < g.batch; ++n) {
                const T* go = grad_out.data() + n * out_plane + co * p_count;
                if (!grad_bias.empty()) grad_bias[co] += sum(go, p_count);
                if (grad_w.empty()) continue;
                const T* c = pointwise ? x.data() + n * in_plane : cols.data() + n * k_count * p_count;
                T* gw = grad_w.data() + co * k_count;
                for (int64_t k = 0; k < k_count; ++k) gw[k] += dot(go, c + k * p_count, p_count);
            }
        }
    }

    if (!grad_x.empty()) {
#pragma omp parallel
        {
            std::vector<T> gcol(static_cast<size_t>(k_count * p_count));
#pragma omp for schedule(static)
            for (int64_t n = 0; n < g.batch; ++n) {
                std::fill(gcol.begin(), gcol.end(), T(0));
                const T* go = grad_out.data() + n * out_plane;
                for (int64_t co = 0; co < g.out_channels; ++co) {
                    const T* wr = w.data() + co * k_count;
                    const T* gr = go + co * p_count;
                    for (int64_t k = 0; k < k_count; ++k) {
                        const T wv = wr[k];
                        T* dst = gcol.data() + k * p_count;
                        for (int64_t p = 0; p < p_count; ++p) dst[p] += wv * gr[p];
                    }
                }
                T* gx = grad_x.data() + n * in_plane;
                if (pointwise) {
                    for (int64_t i = 0; i < in_plane; ++i) gx[i] += gcol[static_cast<size_t>(i)];
                } else {
                    col2im_add(g, gcol.data(), gx);
                }
            }
        }
    }
}

template <typename T>
void linear_forward(int64_t n, int64_t in, int64_t out_dim, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias, std::span<T> out) {
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t o = 0; o < out_dim; ++o) {
            const T b = bias.empty() ? T(0) : bias[o];
            out[r * out_dim + o] = b + dot(x.data() + r * in, w.data() + o * in, in);
        }
    }
}

template <typename T>
void linear_backward(int64_t n, int64_t in, int64_t out_dim, std::span<const T> grad_out,
                     std::span<const T> x, std::span<const T> w, std::span<T> grad_x,
                     std::span<T> grad_w, std::span<T> grad_bias) {
    if (!grad_x.empty()) {
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < n; ++r) {
            T* gx = grad_x.data() + r * in;
            for (int64_t o = 0; o < out_dim; ++o) {
                const T go = grad_out[r * out_dim + o];
                const T* wr = w.data() + o * in;
                for (int64_t i = 0; i < in; ++i) gx[i] += go * wr[i];
            }
        }
    }
    if (!grad_w.empty() || !grad_bias.empty()) {
#pragma omp parallel for schedule(static)
        for (int64_t o = 0; o < out_dim; ++o) {
            for (int64_t r = 0; r < n; ++r) {
                const T go = grad_out[r * out_dim + o];
                if (!grad_bias.empty()) grad_bias[o] += go;
                if (grad_w.empty()) continue;
                T* gw = grad_w.data() + o * in;
                const T* xr = x.data() + r * in;
                for (int64_t i = 0; i < in; ++i) gw[i] += go * xr[i];
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

}  // namespace spgan::kernels
