#include "spgan/ops.hpp"

#include <algorithm>
#include <cmath>

#include "spgan/kernels.hpp"

namespace spgan {

namespace {

template <typename T>
void require_rank(const BasicTensor<T>& t, int rank, const char* op, const char* what) {
    if (!t.defined() || t.ndim() != rank) {
        throw ConfigError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                          (t.defined() ? ", got " + shape_str(t.shape()) : std::string(", got undefined")));
    }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      int stride, int padding) {
    require_rank(x, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");

    kernels::Conv2dGeometry g;
    g.batch = x.dim(0);
    g.in_channels = x.dim(1);
    g.in_h = x.dim(2);
    g.in_w = x.dim(3);
    g.out_channels = weight.dim(0);
    g.kernel_h = weight.dim(2);
    g.kernel_w = weight.dim(3);
    g.stride = stride;
    g.padding = padding;

    if (weight.dim(1) != g.in_channels) {
        throw ConfigError("conv2d: weight " + shape_str(weight.shape()) + " expects " +
                          std::to_string(weight.dim(1)) + " input channels, input is " + shape_str(x.shape()));
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.out_channels)) {
        throw ConfigError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                          std::to_string(g.out_channels) + " output channels");
    }
    const int64_t span_h = g.in_h + 2 * padding - g.kernel_h;
    const int64_t span_w = g.in_w + 2 * padding - g.kernel_w;
    if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
        throw ConfigError("conv2d: kernel " + std::to_string(g.kernel_h) + "x" + std::to_string(g.kernel_w) +
                          " stride " + std::to_string(stride) + " padding " + std::to_string(padding) +
                          " does not tile input " + shape_str(x.shape()) + " exactly");
    }

    BasicTensor<T> out(Shape{g.batch, g.out_channels, g.out_h(), g.out_w()});
    std::span<const T> b = bias.defined() ? bias.data() : std::span<const T>{};
    kernels::conv2d_forward<T>(g, x.data(), weight.data(), b, out.data());

    detail::record<T>(
        out, {&x, &weight, &bias},
        [x, weight, bias, out, g]() mutable {
            if (!out.has_grad()) return;
            auto gx = x.requires_grad() ? x.grad() : std::span<T>{};
            auto gw = weight.requires_grad() ? weight.grad() : std::span<T>{};
            auto gb = (bias.defined() && bias.requires_grad()) ? bias.grad() : std::span<T>{};
            kernels::conv2d_backward<T>(g, std::as_const(out).grad(), std::as_const(x).data(),
                                        std::as_const(weight).data(), gx, gw, gb);
        },
        "conv2d");
    return out;
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, int factor) {
    require_rank(x, 4, "upsample_nearest", "input");
    if (factor < 1) throw ConfigError("upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
    const int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = h * factor, ow = w * factor;
    BasicTensor<T> out(Shape{x.dim(0), x.dim(1), oh, ow});
    auto src = x.data();
    auto dst = out.data();
    for (int64_t p = 0; p < nc; ++p) {
        for (int64_t y = 0; y < oh; ++y) {
            const T* row = src.data() + p * h * w + (y / factor) * w;
            T* o = dst.data() + p * oh * ow + y * ow;
            for (int64_t xo = 0; xo < ow; ++xo) o[xo] = row[xo / factor];
        }
    }
    detail::record<T>(
        out, {&x},
        [x, out, nc, h, w, factor]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto gx = x.grad();
            const int64_t oh = h * factor, ow = w * factor;
            for (int64_t p = 0; p < nc; ++p) {
                for (int64_t y = 0; y < oh; ++y) {
                    T* row = gx.data() + p * h * w + (y / factor) * w;
                    const T* g = go.data() + p * oh * ow + y * ow;
                    for (int64_t xo = 0; xo < ow; ++xo) row[xo / factor] += g[xo];
                }
            }
        },
        "upsample_nearest");
    return out;
}

template <typename T>
BasicTensor<T> adaptive_avg_pool(const BasicTensor<T>& x, int out_hw) {
    require_rank(x, 4, "adaptive_avg_pool", "input");
    const int64_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    if (out_hw < 1 || out_hw > h || out_hw > w) {
        throw ConfigError("adaptive_avg_pool: output size " + std::to_string(out_hw) + " invalid for input " +
                          shape_str(x.shape()));
    }
    const int64_t o = out_hw;
    auto lo = [](int64_t i, int64_t len, int64_t out) { return (i * len) / out; };
    auto hi = [](int64_t i, int64_t len, int64_t out) { return ((i + 1) * len + out - 1) / out; };

    BasicTensor<T> out(Shape{x.dim(0), x.dim(1), o, o});
    auto src = x.data();
    auto dst = out.data();
    for (int64_t p = 0; p < nc; ++p) {
        for (int64_t i = 0; i < o; ++i) {
            const int64_t y0 = lo(i, h, o), y1 = hi(i, h, o);
            for (int64_t j = 0; j < o; ++j) {
                const int64_t x0 = lo(j, w, o), x1 = hi(j, w, o);
                T acc = 0;
                for (int64_t y = y0; y < y1; ++y)
                    for (int64_t xx = x0; xx < x1; ++xx) acc += src[p * h * w + y * w + xx];
                dst[p * o * o + i * o + j] = acc / T((y1 - y0) * (x1 - x0));
            }
        }
    }
    detail::record<T>(
        out, {&x},
        [x, out, nc, h, w, o, lo, hi]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto gx = x.grad();
            for (int64_t p = 0; p < nc; ++p) {
                for (int64_t i = 0; i < o; ++i) {
                    const int64_t y0 = lo(i, h, o), y1 = hi(i, h, o);
                    for (int64_t j = 0; j < o; ++j) {
                        const int64_t x0 = lo(j, w, o), x1 = hi(j, w, o);
                        const T share = go[p * o * o + i * o + j] / T((y1 - y0) * (x1 - x0));
                        for (int64_t y = y0; y < y1; ++y)
                            for (int64_t xx = x0; xx < x1; ++xx) gx[p * h * w + y * w + xx] += share;
                    }
                }
            }
        },
        "adaptive_avg_pool");
    return out;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
    require_rank(x, 2, "linear", "input");
    require_rank(weight, 2, "linear", "weight");
    const int64_t n = x.dim(0), in = x.dim(1), od = weight.dim(0);
    if (weight.dim(1) != in) {
        throw ConfigError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                          shape_str(x.shape()));
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != od)) {
        throw ConfigError("linear: bias " + shape_str(bias.shape()) + " incompatible with weight " +
                          shape_str(weight.shape()));
    }
    BasicTensor<T> out(Shape{n, od});
    std::span<const T> b = bias.defined() ? bias.data() : std::span<const T>{};
    kernels::linear_forward<T>(n, in, od, x.data(), weight.data(), b, out.data());
    detail::record<T>(
        out, {&x, &weight, &bias},
        [x, weight, bias, out, n, in, od]() mutable {
            if (!out.has_grad()) return;
            auto gx = x.requires_grad() ? x.grad() : std::span<T>{};
            auto gw = weight.requires_grad() ? weight.grad() : std::span<T>{};
            auto gb = (bias.defined() && bias.requires_grad()) ? bias.grad() : std::span<T>{};
            kernels::linear_backward<T>(n, in, od, std::as_const(out).grad(), std::as_const(x).data(),
                                        std::as_const(weight).data(), gx, gw, gb);
        },
        "linear");
    return out;
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, const Activation& act) {
    if (act.kind == ActivationKind::leaky_relu && !(act.slope > 0.0 && act.slope < 1.0)) {
        throw ConfigError("leaky_relu slope must lie in (0,1)");
    }
    BasicTensor<T> out(x.shape());
    auto src = x.data();
    auto dst = out.data();
    const T slope = static_cast<T>(act.slope);
    switch (act.kind) {
        case ActivationKind::leaky_relu:
            for (size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0 ? src[i] : slope * src[i];
            break;
        case ActivationKind::relu:
            for (size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0 ? src[i] : T(0);
            break;
        case ActivationKind::tanh:
            for (size_t i = 0; i < src.size(); ++i) dst[i] = std::tanh(src[i]);
            break;
        case ActivationKind::sigmoid:
            for (size_t i = 0; i < src.size(); ++i) dst[i] = stable_sigmoid(src[i]);
            break;
    }
    detail::record<T>(
        out, {&x},
        [x, out, act, slope]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto gx = x.grad();
            auto xs = std::as_const(x).data();
            auto ys = std::as_const(out).data();
            switch (act.kind) {
                case ActivationKind::leaky_relu:
                    for (size_t i = 0; i < go.size(); ++i) gx[i] += xs[i] > 0 ? go[i] : slope * go[i];
                    break;
                case ActivationKind::relu:
                    for (size_t i = 0; i < go.size(); ++i) gx[i] += xs[i] > 0 ? go[i] : T(0);
                    break;
                case ActivationKind::tanh:
                    for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (T(1) - ys[i] * ys[i]);
                    break;
                case ActivationKind::sigmoid:
                    for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * ys[i] * (T(1) - ys[i]);
                    break;
            }
        },
        "activation");
    return out;
}

template <typename T>
BasicTensor<T> softplus(const BasicTensor<T>& x) {
    BasicTensor<T> out(x.shape());
    auto src = x.data();
    auto dst = out.data();
    for (size_t i = 0; i < src.size(); ++i) {
        const T v = src[i];
        dst[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
    }
    detail::record<T>(
        out, {&x},
        [x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto gx = x.grad();
            auto xs = std::as_const(x).data();
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * stable_sigmoid(xs[i]);
        },
        "softplus");
    return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "add");
    BasicTensor<T> out(a.shape());
    auto pa = a.data(), pb = b.data();
    auto dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] + pb[i];
    detail::record<T>(
        out, {&a, &b},
        [a, b, out]() mutable {
            if (!out.has_grad()) return;
            auto go = std::as_const(out).grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        },
        "add");
    return out;
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "sub");
    BasicTensor<T> out(a.shape());
    auto pa = a.data(), pb = b.data();
    auto dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] - pb[i];
    detail::record<T>(
        out, {&a, &b},
        [a, b, out]() mutable {
            if (!out.has_grad()) return;
            auto go = std::as_const(out).grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
            }
        },
        "sub");
    return out;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "mul");
    BasicTensor<T> out(a.shape());
    auto pa = a.data(), pb = b.data();
    auto dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] * pb[i];
    detail::record<T>(
        out, {&a, &b},
        [a, b, out]() mutable {
            if (!out.has_grad()) return;
            auto go = std::as_const(out).grad();
            auto pa = std::as_const(a).data(), pb = std::as_const(b).data();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * pb[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * pa[i];
            }
        },
        "mul");
    return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, double factor) {
    const T f = static_cast<T>(factor);
    BasicTensor<T> out(a.shape());
    auto pa = a.data();
    auto dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] * f;
    detail::record<T>(
        out, {&a},
        [a, out, f]() mutable {
            if (!out.has_grad() || !a.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto ga = a.grad();
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * f;
        },
        "scale");
    return out;
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, double value) {
    const T v = static_cast<T>(value);
    BasicTensor<T> out(a.shape());
    auto pa = a.data();
    auto dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] + v;
    detail::record<T>(
        out, {&a},
        [a, out]() mutable {
            if (!out.has_grad() || !a.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto ga = a.grad();
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        },
        "add_scalar");
    return out;
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& a) {
    return mul(a, a);
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
    // Accumulate in double so large reductions stay accurate in float mode.
    double acc = 0.0;
    for (T v : a.data()) acc += static_cast<double>(v);
    BasicTensor<T> out(Shape{1}, static_cast<T>(acc));
    detail::record<T>(
        out, {&a},
        [a, out]() mutable {
            if (!out.has_grad() || !a.requires_grad()) return;
            const T g = std::as_const(out).grad()[0];
            auto ga = a.grad();
            for (auto& v : ga) v += g;
        },
        "sum");
    return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
    BasicTensor<T> out = a.view_as(std::move(shape));
    detail::record<T>(
        out, {&a},
        [a, out]() mutable {
            if (!out.has_grad() || !a.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto ga = a.grad();
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        },
        "reshape");
    return out;
}

template <typename T>
BasicTensor<T> slice_columns(const BasicTensor<T>& a, int64_t begin, int64_t end) {
    require_rank(a, 2, "slice_columns", "input");
    const int64_t n = a.dim(0), d = a.dim(1);
    if (begin < 0 || end > d || begin >= end) {
        throw ConfigError("slice_columns: range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") invalid for " + shape_str(a.shape()));
    }
    const int64_t width = end - begin;
    BasicTensor<T> out(Shape{n, width});
    auto src = a.data();
    auto dst = out.data();
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < width; ++c) dst[r * width + c] = src[r * d + begin + c];
    detail::record<T>(
        out, {&a},
        [a, out, n, d, begin, width]() mutable {
            if (!out.has_grad() || !a.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto ga = a.grad();
            for (int64_t r = 0; r < n; ++r)
                for (int64_t c = 0; c < width; ++c) ga[r * d + begin + c] += go[r * width + c];
        },
        "slice_columns");
    return out;
}

template <typename T>
BasicTensor<T> channel_gate(const BasicTensor<T>& x, const BasicTensor<T>& gate) {
    require_rank(x, 4, "channel_gate", "input");
    const int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gate.numel() != nc || gate.dim(0) != x.dim(0)) {
        throw ConfigError("channel_gate: gate " + shape_str(gate.shape()) + " does not match input " +
                          shape_str(x.shape()));
    }
    BasicTensor<T> out(x.shape());
    auto src = x.data();
    auto gs = gate.data();
    auto dst = out.data();
    for (int64_t p = 0; p < nc; ++p)
        for (int64_t i = 0; i < hw; ++i) dst[p * hw + i] = gs[p] * src[p * hw + i];
    detail::record<T>(
        out, {&x, &gate},
        [x, gate, out, nc, hw]() mutable {
            if (!out.has_grad()) return;
            auto go = std::as_const(out).grad();
            auto src = std::as_const(x).data();
            auto gs = std::as_const(gate).data();
            if (x.requires_grad()) {
                auto gx = x.grad();
                for (int64_t p = 0; p < nc; ++p)
                    for (int64_t i = 0; i < hw; ++i) gx[p * hw + i] += go[p * hw + i] * gs[p];
            }
            if (gate.requires_grad()) {
                auto gg = gate.grad();
                for (int64_t p = 0; p < nc; ++p) {
                    T acc = 0;
                    for (int64_t i = 0; i < hw; ++i) acc += go[p * hw + i] * src[p * hw + i];
                    gg[p] += acc;
                }
            }
        },
        "channel_gate");
    return out;
}

template <typename T>
BasicTensor<T> broadcast_batch(const BasicTensor<T>& a, int64_t n) {
    if (!a.defined() || a.ndim() < 1 || a.dim(0) != 1) throw ConfigError("broadcast_batch: leading dim must be 1");
    if (n < 1) throw ConfigError("broadcast_batch: batch must be >= 1");
    Shape shape = a.shape();
    shape[0] = n;
    BasicTensor<T> out(shape);
    const int64_t len = a.numel();
    auto src = a.data();
    auto dst = out.data();
    for (int64_t r = 0; r < n; ++r) std::copy(src.begin(), src.end(), dst.begin() + r * len);
    detail::record<T>(
        out, {&a},
        [a, out, n, len]() mutable {
            if (!out.has_grad() || !a.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto ga = a.grad();
            for (int64_t r = 0; r < n; ++r)
                for (int64_t i = 0; i < len; ++i) ga[i] += go[r * len + i];
        },
        "broadcast_batch");
    return out;
}

#define SPGAN_INSTANTIATE(T)                                                                          \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                   int, int);                                                         \
    template BasicTensor<T> upsample_nearest(const BasicTensor<T>&, int);                             \
    template BasicTensor<T> adaptive_avg_pool(const BasicTensor<T>&, int);                            \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> activation(const BasicTensor<T>&, const Activation&);                     \
    template BasicTensor<T> softplus(const BasicTensor<T>&);                                          \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template BasicTensor<T> scale(const BasicTensor<T>&, double);                                     \
    template BasicTensor<T> add_scalar(const BasicTensor<T>&, double);                                \
    template BasicTensor<T> square(const BasicTensor<T>&);                                            \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                               \
    template BasicTensor<T> mean(const BasicTensor<T>&);                                              \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                    \
    template BasicTensor<T> slice_columns(const BasicTensor<T>&, int64_t, int64_t);                   \
    template BasicTensor<T> channel_gate(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template BasicTensor<T> broadcast_batch(const BasicTensor<T>&, int64_t);

SPGAN_INSTANTIATE(float)
SPGAN_INSTANTIATE(double)

#undef SPGAN_INSTANTIATE

}  // namespace spgan
