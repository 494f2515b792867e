#include "spgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "spgan/nn.hpp"
#include "spgan/ops.hpp"
#include "spgan/rng.hpp"

namespace spgan {

template <typename T>
double grad_check(const std::function<BasicTensor<T>()>& f, std::vector<BasicTensor<T>> inputs, double eps) {
    if (!(eps > 0)) throw UsageError("grad_check: eps must be positive");
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    std::vector<std::vector<T>> analytic;
    {
        Tape tape;
        Tape::Scope scope(tape);
        BasicTensor<T> loss = f();
        if (loss.numel() != 1) throw UsageError("grad_check: f must be scalar, got " + shape_str(loss.shape()));
        backward(loss);
        for (auto& t : inputs) {
            auto g = std::as_const(t).grad();
            analytic.emplace_back(g.begin(), g.end());
        }
    }
    Tape::Pause pause;
    double worst = 0.0;
    for (size_t k = 0; k < inputs.size(); ++k) {
        auto data = inputs[k].data();
        for (size_t i = 0; i < data.size(); ++i) {
            const T saved = data[i];
            data[i] = static_cast<T>(saved + eps);
            const double plus = f().item();
            data[i] = static_cast<T>(saved - eps);
            const double minus = f().item();
            data[i] = saved;
            const double fd = (plus - minus) / (2.0 * eps);
            const double a = analytic[k][i];
            const double rel = std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

template double grad_check<float>(const std::function<BasicTensor<float>()>&, std::vector<BasicTensor<float>>, double);
template double grad_check<double>(const std::function<BasicTensor<double>()>&, std::vector<BasicTensor<double>>,
                                   double);

namespace {

using DTensor = BasicTensor<double>;

DTensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    DTensor t(std::move(shape));
    for (auto& v : t.data()) v = scale * rng.normal();
    return t;
}

// Values bounded away from 0 so kinked activations are not sampled at the kink.
DTensor away_from_zero(Shape shape, Rng& rng) {
    DTensor t(std::move(shape));
    for (auto& v : t.data()) {
        const double mag = rng.uniform(0.05, 2.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

int64_t pick(Rng& rng, int64_t lo, int64_t hi) { return lo + static_cast<int64_t>(rng.below(static_cast<uint64_t>(hi - lo + 1))); }

// Random projection to a scalar, so that no output coordinate gets a symmetric weight.
DTensor project(const DTensor& y, const DTensor& weights) { return sum(mul(y, weights)); }

using Trial = std::function<double(Rng&, double eps)>;

double check(const std::function<DTensor()>& f, std::vector<DTensor> inputs, double eps) {
    return grad_check<double>(f, std::move(inputs), eps);
}

std::map<std::string, Trial> trial_table() {
    std::map<std::string, Trial> t;

    t["conv2d"] = [](Rng& rng, double eps) {
        const int64_t n = pick(rng, 1, 2), ci = pick(rng, 1, 4), co = pick(rng, 1, 4);
        const int kernel_options[] = {1, 3, 4};
        const int64_t k = kernel_options[rng.below(3)];
        const int stride = k == 4 ? 2 : static_cast<int>(pick(rng, 1, 2));
        const int pad = k == 1 ? 0 : 1;
        int64_t h = pick(rng, 4, 8);
        while ((h + 2 * pad - k) % stride != 0) ++h;
        auto x = random_tensor({n, ci, h, h}, rng);
        auto w = random_tensor({co, ci, k, k}, rng, 0.5);
        auto b = random_tensor({co}, rng);
        auto r = random_tensor({n, co, (h + 2 * pad - k) / stride + 1, (h + 2 * pad - k) / stride + 1}, rng);
        return check([&] { return project(conv2d(x, w, b, stride, pad), r); }, {x, w, b}, eps);
    };
    t["upsample_nearest"] = [](Rng& rng, double eps) {
        const int f = static_cast<int>(pick(rng, 1, 3));
        auto x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
        auto y0 = upsample_nearest(x, f);
        auto r = random_tensor(y0.shape(), rng);
        return check([&] { return project(upsample_nearest(x, f), r); }, {x}, eps);
    };
    t["adaptive_avg_pool"] = [](Rng& rng, double eps) {
        const int64_t h = pick(rng, 2, 8);
        const int out = static_cast<int>(pick(rng, 1, h));
        auto x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 4), h, h}, rng);
        auto r = random_tensor({x.dim(0), x.dim(1), out, out}, rng);
        return check([&] { return project(adaptive_avg_pool(x, out), r); }, {x}, eps);
    };
    t["linear"] = [](Rng& rng, double eps) {
        const int64_t n = pick(rng, 1, 4), in = pick(rng, 1, 8), od = pick(rng, 1, 8);
        auto x = random_tensor({n, in}, rng);
        auto w = random_tensor({od, in}, rng);
        auto b = random_tensor({od}, rng);
        auto r = random_tensor({n, od}, rng);
        return check([&] { return project(linear(x, w, b), r); }, {x, w, b}, eps);
    };
    auto elementwise = [](Activation act) {
        return [act](Rng& rng, double eps) {
            auto x = away_from_zero({pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)}, rng);
            auto r = random_tensor(x.shape(), rng);
            return check([&] { return project(activation(x, act), r); }, {x}, eps);
        };
    };
    t["leaky_relu"] = elementwise({ActivationKind::leaky_relu, 0.2});
    t["relu"] = elementwise({ActivationKind::relu, 0.0});
    t["tanh"] = elementwise({ActivationKind::tanh, 0.0});
    t["sigmoid"] = elementwise({ActivationKind::sigmoid, 0.0});
    t["softplus"] = [](Rng& rng, double eps) {
        auto x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)}, rng, 3.0);
        auto r = random_tensor(x.shape(), rng);
        return check([&] { return project(softplus(x), r); }, {x}, eps);
    };
    t["add_mul"] = [](Rng& rng, double eps) {
        Shape s{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)};
        auto a = random_tensor(s, rng), b = random_tensor(s, rng), r = random_tensor(s, rng);
        return check([&] { return project(sub(mul(a, b), scale(add(a, b), 0.5)), r); }, {a, b}, eps);
    };
    t["channel_gate"] = [](Rng& rng, double eps) {
        const int64_t n = pick(rng, 1, 2), c = pick(rng, 1, 4);
        auto x = random_tensor({n, c, pick(rng, 1, 8), pick(rng, 1, 8)}, rng);
        auto g = random_tensor({n, c}, rng);
        auto r = random_tensor(x.shape(), rng);
        return check([&] { return project(channel_gate(x, g), r); }, {x, g}, eps);
    };
    t["batch_norm"] = [](Rng& rng, double eps) {
        const int64_t n = pick(rng, 2, 2), c = pick(rng, 1, 4);
        const bool training = rng.uniform() < 0.7;
        auto x = random_tensor({n, c, pick(rng, 1, 8), pick(rng, 2, 8)}, rng, 1.5);
        auto state = nn::BasicBatchNormState<double>::create(c);
        state.gamma = random_tensor({c}, rng);
        state.beta = random_tensor({c}, rng);
        for (auto& v : state.running_mean.data()) v = rng.normal();
        for (auto& v : state.running_var.data()) v = rng.uniform(0.5, 2.0);
        auto r = random_tensor(x.shape(), rng);
        return check([&] { return project(nn::batch_norm(x, state, training), r); }, {x, state.gamma, state.beta}, eps);
    };
    t["instance_norm"] = [](Rng& rng, double eps) {
        auto x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 2, 8), pick(rng, 2, 8)}, rng, 2.0);
        auto r = random_tensor(x.shape(), rng);
        return check([&] { return project(nn::instance_norm(x), r); }, {x}, eps);
    };
    t["inject_noise"] = [](Rng& rng, double eps) {
        const int64_t c = pick(rng, 1, 4);
        auto x = random_tensor({pick(rng, 1, 2), c, pick(rng, 1, 8), pick(rng, 1, 8)}, rng);
        nn::BasicNoiseParams<double> params;
        params.scale = random_tensor({c}, rng);
        auto noise = nn::sample_noise<double>(x.shape(), rng);
        auto r = random_tensor(x.shape(), rng);
        return check([&] { return project(nn::inject_noise(x, params, noise), r); }, {x, params.scale}, eps);
    };
    t["adain"] = [](Rng& rng, double eps) {
        const int64_t n = pick(rng, 1, 2), c = pick(rng, 1, 4);
        auto x = random_tensor({n, c, pick(rng, 2, 8), pick(rng, 2, 8)}, rng, 2.0);
        auto ys = random_tensor({n, c}, rng), yb = random_tensor({n, c}, rng);
        auto r = random_tensor(x.shape(), rng);
        return check([&] { return project(nn::adain(x, ys, yb), r); }, {x, ys, yb}, eps);
    };
    // Style vector -> single-layer affine head -> (scale + 1, bias) -> AdaIN.
    t["affine_adain"] = [](Rng& rng, double eps) {
        const int64_t n = pick(rng, 1, 2), c = pick(rng, 1, 4), wd = pick(rng, 2, 8);
        auto w = random_tensor({n, wd}, rng);
        auto hw = random_tensor({2 * c, wd}, rng, 0.5), hb = random_tensor({2 * c}, rng, 0.1);
        auto x = random_tensor({n, c, pick(rng, 2, 8), pick(rng, 2, 8)}, rng);
        auto r = random_tensor(x.shape(), rng);
        return check(
            [&] {
                auto s = linear(w, hw, hb);
                return project(nn::adain(x, add_scalar(slice_columns(s, 0, c), 1.0), slice_columns(s, c, 2 * c)), r);
            },
            {w, hw, hb, x}, eps);
    };
    // Skip-layer gate: pool(4) -> conv4x4 -> leaky_relu -> conv1x1 -> sigmoid -> channel gate.
    t["sle_gate"] = [](Rng& rng, double eps) {
        const int64_t n = pick(rng, 1, 2), cl = pick(rng, 1, 4), ch = pick(rng, 1, 4);
        const int64_t lh = 4 * pick(rng, 1, 2);
        auto low = random_tensor({n, cl, lh, lh}, rng);
        auto high = random_tensor({n, ch, 8, 8}, rng);
        auto w4 = random_tensor({cl, cl, 4, 4}, rng, 0.3), b4 = random_tensor({cl}, rng, 0.1);
        auto w1 = random_tensor({ch, cl, 1, 1}, rng, 0.5), b1 = random_tensor({ch}, rng, 0.1);
        auto r = random_tensor(high.shape(), rng);
        return check(
            [&] {
                auto g = conv2d(leaky_relu(conv2d(adaptive_avg_pool(low, 4), w4, b4)), w1, b1);
                return project(channel_gate(high, sigmoid(g)), r);
            },
            {low, high, w4, b4, w1, b1}, eps);
    };
    t["conv_norm_pool"] = [](Rng& rng, double eps) {
        const int64_t n = pick(rng, 1, 2), ci = pick(rng, 1, 4), co = pick(rng, 1, 4);
        auto x = random_tensor({n, ci, 8, 8}, rng);
        auto w = random_tensor({co, ci, 3, 3}, rng, 0.5);
        auto r = random_tensor({n, co, 2, 2}, rng);
        // No conv bias: instance_norm removes it, so its gradient is exactly zero and the
        // relative error would only measure finite-difference noise.
        return check([&] { return project(adaptive_avg_pool(nn::instance_norm(conv2d(x, w, DTensor(), 1, 1)), 2), r); },
                     {x, w}, eps);
    };
    return t;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
    std::vector<std::string> names;
    for (const auto& [name, trial] : trial_table()) names.push_back(name);
    return names;
}

std::vector<GradCheckResult> run_gradcheck(const std::string& scope, double tol, int trials, uint64_t seed,
                                           double eps) {
    const auto table = trial_table();
    std::vector<std::string> selected;
    if (scope == "all") {
        for (const auto& [name, trial] : table) selected.push_back(name);
    } else if (table.count(scope)) {
        selected.push_back(scope);
    } else {
        std::string known;
        for (const auto& [name, trial] : table) known += " " + name;
        throw UsageError("unknown gradcheck scope '" + scope + "'; expected all or one of:" + known);
    }
    std::vector<GradCheckResult> results;
    for (const auto& name : selected) {
        GradCheckResult res;
        res.op = name;
        for (int i = 0; i < trials; ++i) {
            Rng rng(derive_seed(seed, name, static_cast<uint64_t>(i)));
            res.max_rel_error = std::max(res.max_rel_error, table.at(name)(rng, eps));
            ++res.trials;
        }
        res.passed = res.max_rel_error < tol;
        results.push_back(res);
    }
    return results;
}

}  // namespace spgan
