#include "spgan/nn.hpp"

#include <cmath>
#include <vector>

namespace spgan::nn {

namespace {

template <typename T>
void require_nchw(const BasicTensor<T>& x, const char* op) {
    if (!x.defined() || x.ndim() != 4) {
        throw ConfigError(std::string(op) + ": expected [N,C,H,W] input" +
                          (x.defined() ? ", got " + shape_str(x.shape()) : std::string()));
    }
}

// Mean and inverse std of contiguous groups of `len` values.
template <typename T>
void group_stats(std::span<const T> x, int64_t groups, int64_t len, double eps, std::vector<double>& mean,
                 std::vector<double>& inv_std) {
    mean.resize(static_cast<size_t>(groups));
    inv_std.resize(static_cast<size_t>(groups));
    for (int64_t g = 0; g < groups; ++g) {
        const T* p = x.data() + g * len;
        double m = 0;
        for (int64_t i = 0; i < len; ++i) m += p[i];
        m /= static_cast<double>(len);
        double v = 0;
        for (int64_t i = 0; i < len; ++i) v += (p[i] - m) * (p[i] - m);
        v /= static_cast<double>(len);
        mean[static_cast<size_t>(g)] = m;
        inv_std[static_cast<size_t>(g)] = 1.0 / std::sqrt(v + eps);
    }
}

// Backward of y = gamma * xhat over one group given xhat, returning dx contributions.
// dx = gamma * inv_std / M * (M*g - sum(g) - xhat * sum(g*xhat))
template <typename T>
void group_norm_backward(const T* go, const T* xhat, int64_t len, double gamma, double inv_std, T* gx) {
    double sg = 0, sgx = 0;
    for (int64_t i = 0; i < len; ++i) {
        sg += go[i];
        sgx += static_cast<double>(go[i]) * xhat[i];
    }
    const double m = static_cast<double>(len);
    const double k = gamma * inv_std / m;
    for (int64_t i = 0; i < len; ++i) gx[i] += static_cast<T>(k * (m * go[i] - sg - xhat[i] * sgx));
}

}  // namespace

template <typename T>
BasicBatchNormState<T> BasicBatchNormState<T>::create(int64_t channels) {
    BasicBatchNormState s;
    s.gamma = BasicTensor<T>(Shape{channels}, T(1));
    s.gamma.set_requires_grad(true);
    s.beta = BasicTensor<T>::zeros(Shape{channels});
    s.beta.set_requires_grad(true);
    s.running_mean = BasicTensor<T>::zeros(Shape{channels});
    s.running_var = BasicTensor<T>(Shape{channels}, T(1));
    return s;
}

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, BasicBatchNormState<T>& state, bool training) {
    require_nchw(x, "batch_norm");
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (state.channels() != c || state.beta.numel() != c || state.running_mean.numel() != c ||
        state.running_var.numel() != c) {
        throw ConfigError("batch_norm: state has " + std::to_string(state.channels()) + " channels, input " +
                          shape_str(x.shape()));
    }
    if (training && n < 2) throw UsageError("batch_norm: training mode needs batch >= 2, got " + std::to_string(n));

    const int64_t count = n * hw;
    std::vector<double> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
    auto src = x.data();
    if (training) {
        auto rm = state.running_mean.data();
        auto rv = state.running_var.data();
        for (int64_t ch = 0; ch < c; ++ch) {
            double m = 0;
            for (int64_t s = 0; s < n; ++s)
                for (int64_t i = 0; i < hw; ++i) m += src[(s * c + ch) * hw + i];
            m /= static_cast<double>(count);
            double v = 0;
            for (int64_t s = 0; s < n; ++s)
                for (int64_t i = 0; i < hw; ++i) {
                    const double d = src[(s * c + ch) * hw + i] - m;
                    v += d * d;
                }
            const double biased = v / static_cast<double>(count);
            const double unbiased = v / static_cast<double>(count - 1);
            mean[static_cast<size_t>(ch)] = m;
            inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(biased + state.eps);
            rm[ch] = static_cast<T>((1.0 - state.momentum) * rm[ch] + state.momentum * m);
            rv[ch] = static_cast<T>((1.0 - state.momentum) * rv[ch] + state.momentum * unbiased);
        }
    } else {
        auto rm = state.running_mean.data();
        auto rv = state.running_var.data();
        for (int64_t ch = 0; ch < c; ++ch) {
            mean[static_cast<size_t>(ch)] = rm[ch];
            inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(static_cast<double>(rv[ch]) + state.eps);
        }
    }

    BasicTensor<T> xhat(x.shape());
    BasicTensor<T> out(x.shape());
    auto xh = xhat.data();
    auto dst = out.data();
    auto gamma = state.gamma.data();
    auto beta = state.beta.data();
    for (int64_t s = 0; s < n; ++s)
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (s * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                const T v = static_cast<T>((src[base + i] - mean[static_cast<size_t>(ch)]) *
                                           inv_std[static_cast<size_t>(ch)]);
                xh[base + i] = v;
                dst[base + i] = gamma[ch] * v + beta[ch];
            }
        }

    BasicTensor<T> g = state.gamma, b = state.beta;
    detail::record<T>(
        out, {&x, &g, &b},
        [x, g, b, out, xhat, inv_std, n, c, hw, training]() mutable {
            if (!out.has_grad()) return;
            auto go = std::as_const(out).grad();
            auto xh = std::as_const(xhat).data();
            auto gamma = std::as_const(g).data();
            if (g.requires_grad() || b.requires_grad()) {
                auto gg = g.requires_grad() ? g.grad() : std::span<T>{};
                auto gb = b.requires_grad() ? b.grad() : std::span<T>{};
                for (int64_t ch = 0; ch < c; ++ch) {
                    double sg = 0, sgx = 0;
                    for (int64_t s = 0; s < n; ++s)
                        for (int64_t i = 0; i < hw; ++i) {
                            const int64_t k = (s * c + ch) * hw + i;
                            sg += go[k];
                            sgx += static_cast<double>(go[k]) * xh[k];
                        }
                    if (!gg.empty()) gg[ch] += static_cast<T>(sgx);
                    if (!gb.empty()) gb[ch] += static_cast<T>(sg);
                }
            }
            if (!x.requires_grad()) return;
            auto gx = x.grad();
            for (int64_t ch = 0; ch < c; ++ch) {
                const double k = gamma[ch] * inv_std[static_cast<size_t>(ch)];
                if (!training) {
                    for (int64_t s = 0; s < n; ++s)
                        for (int64_t i = 0; i < hw; ++i) {
                            const int64_t idx = (s * c + ch) * hw + i;
                            gx[idx] += static_cast<T>(k * go[idx]);
                        }
                    continue;
                }
                double sg = 0, sgx = 0;
                for (int64_t s = 0; s < n; ++s)
                    for (int64_t i = 0; i < hw; ++i) {
                        const int64_t idx = (s * c + ch) * hw + i;
                        sg += go[idx];
                        sgx += static_cast<double>(go[idx]) * xh[idx];
                    }
                const double m = static_cast<double>(n * hw);
                for (int64_t s = 0; s < n; ++s)
                    for (int64_t i = 0; i < hw; ++i) {
                        const int64_t idx = (s * c + ch) * hw + i;
                        gx[idx] += static_cast<T>(k / m * (m * go[idx] - sg - xh[idx] * sgx));
                    }
            }
        },
        "batch_norm");
    return out;
}

template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, double eps) {
    require_nchw(x, "instance_norm");
    const int64_t groups = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    if (hw < 2) throw UsageError("instance_norm: needs H*W >= 2, got " + shape_str(x.shape()));
    std::vector<double> mean, inv_std;
    group_stats<T>(x.data(), groups, hw, eps, mean, inv_std);
    BasicTensor<T> out(x.shape());
    auto src = x.data();
    auto dst = out.data();
    for (int64_t gi = 0; gi < groups; ++gi)
        for (int64_t i = 0; i < hw; ++i)
            dst[gi * hw + i] = static_cast<T>((src[gi * hw + i] - mean[static_cast<size_t>(gi)]) *
                                              inv_std[static_cast<size_t>(gi)]);
    detail::record<T>(
        out, {&x},
        [x, out, inv_std, groups, hw]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto go = std::as_const(out).grad();
            auto xh = std::as_const(out).data();
            auto gx = x.grad();
            for (int64_t gi = 0; gi < groups; ++gi)
                group_norm_backward(go.data() + gi * hw, xh.data() + gi * hw, hw, 1.0,
                                    inv_std[static_cast<size_t>(gi)], gx.data() + gi * hw);
        },
        "instance_norm");
    return out;
}

template <typename T>
BasicTensor<T> sample_noise(const Shape& like, Rng& rng) {
    if (like.size() != 4) throw ConfigError("sample_noise: expected a [N,C,H,W] shape");
    BasicTensor<T> noise(Shape{like[0], 1, like[2], like[3]});
    for (auto& v : noise.data()) v = static_cast<T>(rng.normal());
    return noise;
}

template <typename T>
BasicTensor<T> inject_noise(const BasicTensor<T>& x, const BasicNoiseParams<T>& params, const BasicTensor<T>& noise) {
    require_nchw(x, "inject_noise");
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (params.scale.numel() != c) {
        throw ConfigError("inject_noise: " + std::to_string(params.scale.numel()) + " scales for " +
                          std::to_string(c) + " channels");
    }
    if (noise.shape() != Shape{n, 1, x.dim(2), x.dim(3)}) {
        throw ConfigError("inject_noise: noise " + shape_str(noise.shape()) + " does not match " + shape_str(x.shape()));
    }
    BasicTensor<T> out(x.shape());
    auto src = x.data();
    auto eps = noise.data();
    auto sc = params.scale.data();
    auto dst = out.data();
    for (int64_t s = 0; s < n; ++s)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < hw; ++i) {
                const int64_t k = (s * c + ch) * hw + i;
                dst[k] = src[k] + sc[ch] * eps[s * hw + i];
            }
    BasicTensor<T> scale = params.scale;
    detail::record<T>(
        out, {&x, &scale, &noise},
        [x, scale, noise, out, n, c, hw]() mutable {
            if (!out.has_grad()) return;
            auto go = std::as_const(out).grad();
            auto eps = std::as_const(noise).data();
            if (x.requires_grad()) {
                auto gx = x.grad();
                for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
            }
            if (scale.requires_grad()) {
                auto gs = scale.grad();
                for (int64_t ch = 0; ch < c; ++ch) {
                    double acc = 0;
                    for (int64_t s = 0; s < n; ++s)
                        for (int64_t i = 0; i < hw; ++i) acc += static_cast<double>(go[(s * c + ch) * hw + i]) * eps[s * hw + i];
                    gs[ch] += static_cast<T>(acc);
                }
            }
            if (noise.requires_grad()) {
                auto sc = std::as_const(scale).data();
                auto gn = noise.grad();
                for (int64_t s = 0; s < n; ++s)
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t i = 0; i < hw; ++i) gn[s * hw + i] += go[(s * c + ch) * hw + i] * sc[ch];
            }
        },
        "inject_noise");
    return out;
}

template <typename T>
BasicTensor<T> inject_noise(const BasicTensor<T>& x, const BasicNoiseParams<T>& params, Rng& rng) {
    require_nchw(x, "inject_noise");
    return inject_noise(x, params, sample_noise<T>(x.shape(), rng));
}

template <typename T>
BasicTensor<T> adain(const BasicTensor<T>& x, const BasicTensor<T>& y_scale, const BasicTensor<T>& y_bias,
                     double eps) {
    require_nchw(x, "adain");
    const int64_t n = x.dim(0), c = x.dim(1), groups = n * c, hw = x.dim(2) * x.dim(3);
    if (!y_scale.defined() || !y_bias.defined() || y_scale.numel() != groups || y_bias.numel() != groups ||
        y_scale.dim(0) != n || y_bias.dim(0) != n) {
        throw ConfigError("adain: style " + (y_scale.defined() ? shape_str(y_scale.shape()) : std::string("?")) + "/" +
                          (y_bias.defined() ? shape_str(y_bias.shape()) : std::string("?")) +
                          " does not match input " + shape_str(x.shape()));
    }
    if (hw < 2) throw UsageError("adain: needs H*W >= 2, got " + shape_str(x.shape()));
    std::vector<double> mean, inv_std;
    group_stats<T>(x.data(), groups, hw, eps, mean, inv_std);

    BasicTensor<T> xhat(x.shape());
    BasicTensor<T> out(x.shape());
    auto src = x.data();
    auto xh = xhat.data();
    auto ys = y_scale.data();
    auto yb = y_bias.data();
    auto dst = out.data();
    for (int64_t gi = 0; gi < groups; ++gi)
        for (int64_t i = 0; i < hw; ++i) {
            const T v = static_cast<T>((src[gi * hw + i] - mean[static_cast<size_t>(gi)]) * inv_std[static_cast<size_t>(gi)]);
            xh[gi * hw + i] = v;
            dst[gi * hw + i] = ys[gi] * v + yb[gi];
        }
    detail::record<T>(
        out, {&x, &y_scale, &y_bias},
        [x, y_scale, y_bias, out, xhat, inv_std, groups, hw]() mutable {
            if (!out.has_grad()) return;
            auto go = std::as_const(out).grad();
            auto xh = std::as_const(xhat).data();
            auto ys = std::as_const(y_scale).data();
            if (y_scale.requires_grad() || y_bias.requires_grad()) {
                auto gs = y_scale.requires_grad() ? y_scale.grad() : std::span<T>{};
                auto gb = y_bias.requires_grad() ? y_bias.grad() : std::span<T>{};
                for (int64_t gi = 0; gi < groups; ++gi) {
                    double sg = 0, sgx = 0;
                    for (int64_t i = 0; i < hw; ++i) {
                        sg += go[gi * hw + i];
                        sgx += static_cast<double>(go[gi * hw + i]) * xh[gi * hw + i];
                    }
                    if (!gs.empty()) gs[gi] += static_cast<T>(sgx);
                    if (!gb.empty()) gb[gi] += static_cast<T>(sg);
                }
            }
            if (!x.requires_grad()) return;
            auto gx = x.grad();
            for (int64_t gi = 0; gi < groups; ++gi)
                group_norm_backward(go.data() + gi * hw, xh.data() + gi * hw, hw, static_cast<double>(ys[gi]),
                                    inv_std[static_cast<size_t>(gi)], gx.data() + gi * hw);
        },
        "adain");
    return out;
}

#define SPGAN_INSTANTIATE(T)                                                                                  \
    template struct BasicBatchNormState<T>;                                                                   \
    template BasicTensor<T> batch_norm(const BasicTensor<T>&, BasicBatchNormState<T>&, bool);                \
    template BasicTensor<T> instance_norm(const BasicTensor<T>&, double);                                    \
    template BasicTensor<T> sample_noise<T>(const Shape&, Rng&);                                              \
    template BasicTensor<T> inject_noise(const BasicTensor<T>&, const BasicNoiseParams<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> inject_noise(const BasicTensor<T>&, const BasicNoiseParams<T>&, Rng&);           \
    template BasicTensor<T> adain(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, double);

SPGAN_INSTANTIATE(float)
SPGAN_INSTANTIATE(double)

#undef SPGAN_INSTANTIATE

}  // namespace spgan::nn
