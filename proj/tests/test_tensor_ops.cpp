#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "spgan/gradcheck.hpp"
#include "spgan/kernels.hpp"
#include "spgan/nn.hpp"
#include "spgan/ops.hpp"
#include "spgan/rng.hpp"

using namespace spgan;
using DTensor = BasicTensor<double>;

namespace {

std::vector<double> as_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor random_tensor(Shape s, Rng& rng) {
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = static_cast<float>(rng.normal());
    return t;
}

DTensor random_dtensor(Shape s, Rng& rng) {
    DTensor t(std::move(s));
    for (auto& v : t.data()) v = rng.normal();
    return t;
}

}  // namespace

TEST(Tensor, ShapeAndStorage) {
    Tensor t({2, 3}, 1.5f);
    EXPECT_EQ(t.numel(), 6);
    EXPECT_EQ(shape_numel(t.shape()), static_cast<int64_t>(t.data().size()));
    Tensor alias = t;
    alias.data()[0] = 7.0f;
    EXPECT_EQ(t.data()[0], 7.0f);
    Tensor deep = t.clone();
    deep.data()[0] = 0.0f;
    EXPECT_EQ(t.data()[0], 7.0f);
    EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ConfigError);
}

TEST(Tensor, AnomalyDetectionFlagsNonFinite) {
    set_anomaly_detection(true);
    Tensor x({2}, std::vector<float>{1.0f, INFINITY});
    EXPECT_THROW(scale(x, 2.0), NumericError);
    set_anomaly_detection(false);
    EXPECT_NO_THROW(scale(x, 2.0));
}

TEST(Conv2d, ScalarKernelScalesInput) {
    Tensor x({1, 1, 3, 3}, 1.0f);
    Tensor w({1, 1, 1, 1}, 2.0f);
    const Tensor y = conv2d(x, w, Tensor(), 1, 0);
    for (float v : y.data()) EXPECT_EQ(v, 2.0f);
}

TEST(Conv2d, AllOnesKernelMatchesDirectSum) {
    Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    Tensor w({1, 1, 3, 3}, 1.0f);
    const Tensor y = conv2d(x, w, Tensor(), 1, 1);
    const auto expect = oracle::conv2d(as_double(x), 1, 1, 2, 2, as_double(w), 1, 3, 3, {}, 1, 1);
    ASSERT_EQ(y.numel(), 4);
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y.data()[i], expect[i]);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(y.data()[i], 10.0f);
}

TEST(Conv2d, IdentityKernelIsExact) {
    Rng rng(1);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor w({3, 3, 3, 3});
    for (int c = 0; c < 3; ++c) w.data()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0f;
    const Tensor y = conv2d(x, w, Tensor(), 1, 1);
    for (int64_t i = 0; i < x.numel(); ++i) ASSERT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, RandomCasesMatchDirectSum) {
    Rng rng(2);
    struct Case {
        int n, ci, h, co, k, s, p;
    };
    for (const Case c : {Case{2, 3, 8, 4, 3, 1, 1}, Case{1, 2, 8, 3, 4, 2, 1}, Case{2, 4, 5, 2, 1, 1, 0},
                         Case{1, 3, 7, 2, 3, 2, 0}}) {
        Tensor x = random_tensor({c.n, c.ci, c.h, c.h}, rng);
        Tensor w = random_tensor({c.co, c.ci, c.k, c.k}, rng);
        Tensor b = random_tensor({c.co}, rng);
        const Tensor y = conv2d(x, w, b, c.s, c.p);
        const auto expect = oracle::conv2d(as_double(x), c.n, c.ci, c.h, c.h, as_double(w), c.co, c.k, c.k,
                                           as_double(b), c.s, c.p);
        ASSERT_EQ(static_cast<size_t>(y.numel()), expect.size());
        for (size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y.data()[i], expect[i], 1e-4);
    }
}

TEST(Conv2d, RejectsBadGeometry) {
    Tensor x({1, 2, 5, 5});
    EXPECT_THROW(conv2d(x, Tensor({1, 3, 3, 3}), Tensor(), 1, 1), ConfigError);  // channel mismatch
    EXPECT_NO_THROW(conv2d(x, Tensor({1, 2, 3, 3}), Tensor(), 2, 1));  // (5 + 2 - 3) / 2 tiles exactly
    Tensor x6({1, 2, 6, 6});
    EXPECT_THROW(conv2d(x6, Tensor({1, 2, 3, 3}), Tensor(), 2, 0), ConfigError);
    EXPECT_THROW(conv2d(x, Tensor({1, 2, 3, 3}), Tensor({2}), 1, 1), ConfigError);
}

TEST(Kernels, ParallelMatchesReferenceBitwise) {
    Rng rng(3);
    kernels::Conv2dGeometry g{2, 5, 9, 9, 6, 3, 3, 1, 1};
    const int64_t ho = g.out_h(), wo = g.out_w();
    std::vector<float> x(2 * 5 * 81), w(6 * 5 * 9), b(6), go(2 * 6 * ho * wo);
    for (auto* v : {&x, &w, &b, &go})
        for (auto& e : *v) e = static_cast<float>(rng.normal());
    std::vector<float> o1(go.size()), o2(go.size());
    kernels::conv2d_forward<float>(g, x, w, b, o1);
    kernels::reference::conv2d_forward<float>(g, x, w, b, o2);
    for (size_t i = 0; i < o1.size(); ++i) EXPECT_NEAR(o1[i], o2[i], 1e-4f);

    std::vector<float> gx1(x.size()), gw1(w.size()), gb1(b.size()), gx2(x.size()), gw2(w.size()), gb2(b.size());
    kernels::conv2d_backward<float>(g, go, x, w, gx1, gw1, gb1);
    kernels::reference::conv2d_backward<float>(g, go, x, w, gx2, gw2, gb2);
    for (size_t i = 0; i < gx1.size(); ++i) EXPECT_NEAR(gx1[i], gx2[i], 1e-3f);
    for (size_t i = 0; i < gw1.size(); ++i) EXPECT_NEAR(gw1[i], gw2[i], 1e-3f);
    for (size_t i = 0; i < gb1.size(); ++i) EXPECT_NEAR(gb1[i], gb2[i], 1e-3f);
}

TEST(Kernels, ThreadCountDoesNotChangeResults) {
    Rng rng(4);
    kernels::Conv2dGeometry g{4, 8, 16, 16, 8, 3, 3, 1, 1};
    std::vector<float> x(4 * 8 * 256), w(8 * 8 * 9), go(4 * 8 * 256);
    for (auto* v : {&x, &w, &go})
        for (auto& e : *v) e = static_cast<float>(rng.normal());
    auto run = [&](int threads) {
        kernels::set_num_threads(threads);
        std::vector<float> out(go.size()), gx(x.size()), gw(w.size());
        kernels::conv2d_forward<float>(g, x, w, {}, out);
        kernels::conv2d_backward<float>(g, go, x, w, gx, gw, {});
        out.insert(out.end(), gx.begin(), gx.end());
        out.insert(out.end(), gw.begin(), gw.end());
        return out;
    };
    const int before = kernels::max_threads();
    const auto a = run(1), b = run(3);
    kernels::set_num_threads(before);
    EXPECT_EQ(a, b);
}

TEST(Kernels, LinearMatchesReference) {
    Rng rng(5);
    const int n = 3, in = 7, out = 5;
    std::vector<double> x(n * in), w(out * in), b(out), go(n * out);
    for (auto* v : {&x, &w, &b, &go})
        for (auto& e : *v) e = rng.normal();
    std::vector<double> o1(n * out), o2(n * out);
    kernels::linear_forward<double>(n, in, out, x, w, b, o1);
    kernels::reference::linear_forward<double>(n, in, out, x, w, b, o2);
    for (int i = 0; i < n * out; ++i) EXPECT_NEAR(o1[i], o2[i], 1e-12);
    std::vector<double> gx1(x.size()), gw1(w.size()), gb1(b.size()), gx2(x.size()), gw2(w.size()), gb2(b.size());
    kernels::linear_backward<double>(n, in, out, go, x, w, gx1, gw1, gb1);
    kernels::reference::linear_backward<double>(n, in, out, go, x, w, gx2, gw2, gb2);
    for (size_t i = 0; i < gx1.size(); ++i) EXPECT_NEAR(gx1[i], gx2[i], 1e-12);
    for (size_t i = 0; i < gw1.size(); ++i) EXPECT_NEAR(gw1[i], gw2[i], 1e-12);
    for (size_t i = 0; i < gb1.size(); ++i) EXPECT_NEAR(gb1[i], gb2[i], 1e-12);
}

TEST(Upsample, FactorOneIsIdentity) {
    Rng rng(6);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    const Tensor y = upsample_nearest(x, 1);
    EXPECT_EQ(y.shape(), x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Upsample, ReplicatesPixels) {
    Tensor x({1, 1, 1, 1}, 5.0f);
    const Tensor y = upsample_nearest(x, 2);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
    for (float v : y.data()) EXPECT_EQ(v, 5.0f);
    EXPECT_THROW(upsample_nearest(x, 0), ConfigError);
}

TEST(Upsample, GradientOfSumIsFactorSquared) {
    Rng rng(7);
    DTensor x = random_dtensor({1, 2, 3, 3}, rng);
    x.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    backward(sum(upsample_nearest(x, 2)));
    for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 4.0);
    DTensor probe = random_dtensor({1, 2, 3, 3}, rng);
    const double err =
        grad_check<double>([&] { return sum(mul(upsample_nearest(probe, 2), upsample_nearest(probe, 2))); },
                           {probe}, 1e-5);
    EXPECT_LT(err, 1e-6);
}

TEST(Pool, SameSizeIsIdentityAndGlobalMean) {
    Rng rng(8);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    const Tensor y = adaptive_avg_pool(x, 4);
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);

    Tensor rows({1, 1, 4, 4});
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) rows.data()[r * 4 + c] = static_cast<float>(r + 1);
    EXPECT_FLOAT_EQ(adaptive_avg_pool(rows, 1).item(), 2.5f);
    EXPECT_THROW(adaptive_avg_pool(x, 5), ConfigError);
}

TEST(Pool, QuadrantMeansMatchLoopOracle) {
    Rng rng(9);
    Tensor x = random_tensor({1, 1, 4, 4}, rng);
    const Tensor y = adaptive_avg_pool(x, 2);
    const auto expect = oracle::block_means(as_double(x), 4, 4, 2);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], expect[i], 1e-6);
}

TEST(Pool, UpsampleThenPoolIsIdentity) {
    Rng rng(10);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    const Tensor y = adaptive_avg_pool(upsample_nearest(x, 2), 4);
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Linear, Examples) {
    Tensor x({1, 2}, std::vector<float>{1, 2});
    Tensor eye({2, 2}, std::vector<float>{1, 0, 0, 1});
    Tensor zero_b({2});
    const Tensor same = linear(x, eye, zero_b);
    EXPECT_EQ(same.data()[0], 1.0f);
    EXPECT_EQ(same.data()[1], 2.0f);

    Tensor w({2, 2}, std::vector<float>{1, 1, 1, -1});
    const Tensor y = linear(x, w, zero_b);
    EXPECT_EQ(y.data()[0], 3.0f);
    EXPECT_EQ(y.data()[1], -1.0f);

    Tensor xs({3, 2}, std::vector<float>{1, 2, 3, 4, 5, 6});
    Tensor b({2}, std::vector<float>{0.5f, -2.0f});
    const Tensor bo = linear(xs, Tensor({2, 2}), b);
    for (int r = 0; r < 3; ++r) {
        EXPECT_EQ(bo.data()[r * 2], 0.5f);
        EXPECT_EQ(bo.data()[r * 2 + 1], -2.0f);
    }
    EXPECT_THROW(linear(x, Tensor({2, 3}), zero_b), ConfigError);
}

TEST(Activation, Examples) {
    const Tensor r = relu(Tensor({3}, std::vector<float>{-1, 0, 2}));
    EXPECT_EQ(r.data()[0], 0.0f);
    EXPECT_EQ(r.data()[1], 0.0f);
    EXPECT_EQ(r.data()[2], 2.0f);
    EXPECT_FLOAT_EQ(leaky_relu(Tensor({1}, -2.0f), 0.1).item(), -0.2f);
    EXPECT_EQ(tanh(Tensor({1}, 0.0f)).item(), 0.0f);
}

TEST(Activation, SubgradientAtZeroIsNegativeSlope) {
    DTensor x({1}, 0.0);
    x.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    backward(sum(leaky_relu(x, 0.1)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.1);
}

TEST(Softplus, StableAtExtremes) {
    const Tensor s = softplus(Tensor({3}, std::vector<float>{-1000.0f, 0.0f, 1000.0f}));
    EXPECT_FLOAT_EQ(s.data()[0], 0.0f);
    EXPECT_FLOAT_EQ(s.data()[1], static_cast<float>(std::log(2.0)));
    EXPECT_FLOAT_EQ(s.data()[2], 1000.0f);
}

TEST(Backward, SumAndSquare) {
    Tape tape;
    Tape::Scope scope(tape);
    DTensor x({3}, 2.0);
    x.set_requires_grad(true);
    backward(sum(x));
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);

    DTensor y({2}, std::vector<double>{1, 2});
    y.set_requires_grad(true);
    backward(sum(mul(y, y)));
    EXPECT_EQ(y.grad()[0], 2.0);
    EXPECT_EQ(y.grad()[1], 4.0);
}

TEST(Backward, NonScalarLossIsUsageError) {
    Tape tape;
    Tape::Scope scope(tape);
    DTensor x({3}, 1.0);
    x.set_requires_grad(true);
    EXPECT_THROW(backward(scale(x, 2.0)), UsageError);
}

TEST(Backward, UnreachableLeafGetsZeroGradient) {
    Tape tape;
    Tape::Scope scope(tape);
    DTensor a({2}, 1.0), b({2, 2}, 1.0);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    backward(sum(a));
    ASSERT_EQ(b.grad().size(), 4u);
    for (double g : b.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NoRecordingWithoutTapeOrUnderPause) {
    DTensor a({2}, 1.0);
    a.set_requires_grad(true);
    EXPECT_FALSE(sum(a).requires_grad());
    Tape tape;
    Tape::Scope scope(tape);
    {
        Tape::Pause pause;
        EXPECT_FALSE(sum(a).requires_grad());
    }
    EXPECT_TRUE(sum(a).requires_grad());
    EXPECT_EQ(tape.size(), 1u);
}

TEST(Backward, IsBitwiseDeterministic) {
    Rng rng(11);
    Tensor x = random_tensor({2, 3, 8, 8}, rng), w = random_tensor({4, 3, 3, 3}, rng);
    w.set_requires_grad(true);
    std::vector<std::vector<float>> grads;
    for (int rep = 0; rep < 2; ++rep) {
        w.zero_grad();
        Tape tape;
        Tape::Scope scope(tape);
        backward(mean(square(adaptive_avg_pool(conv2d(x, w, Tensor(), 1, 1), 2))));
        grads.emplace_back(w.grad().begin(), w.grad().end());
    }
    EXPECT_EQ(grads[0], grads[1]);
}

TEST(Backward, CompositeConvNormPoolMatchesFiniteDifferences) {
    // eps 1e-3 as in the contract; double precision keeps truncation error well inside the gate.
    Rng rng(12);
    DTensor x = random_dtensor({2, 2, 6, 6}, rng), w = random_dtensor({3, 2, 3, 3}, rng);
    auto f = [&] {
        DTensor h = conv2d(x, w, DTensor(), 1, 1);
        return sum(square(adaptive_avg_pool(nn::instance_norm(h), 3)));
    };
    EXPECT_LT(grad_check<double>(f, {x, w}, 1e-3), 1e-3);
}

TEST(GradCheck, SumIsExact) {
    Rng rng(13);
    DTensor x = random_dtensor({2, 3, 4}, rng);
    EXPECT_LT(grad_check<double>([&] { return sum(x); }, {x}, 1e-5), 1e-6);
}

TEST(GradCheck, ConvSumBelowGate) {
    Rng rng(14);
    DTensor x = random_dtensor({2, 3, 5, 5}, rng), w = random_dtensor({2, 3, 3, 3}, rng);
    EXPECT_LT(grad_check<double>([&] { return sum(conv2d(x, w, DTensor(), 1, 1)); }, {x, w}, 1e-5), 1e-3);
}

TEST(GradCheck, NonScalarFunctionIsUsageError) {
    DTensor x({3}, 1.0);
    EXPECT_THROW(grad_check<double>([&] { return scale(x, 2.0); }, {x}, 1e-5), UsageError);
}

TEST(GradCheck, SuiteCoversEveryOpAndRejectsUnknownScope) {
    const auto ops = gradcheck_ops();
    for (const char* name : {"conv2d", "upsample_nearest", "adaptive_avg_pool", "linear", "leaky_relu", "relu",
                             "tanh", "sigmoid", "softplus", "batch_norm", "instance_norm", "inject_noise", "adain"})
        EXPECT_NE(std::find(ops.begin(), ops.end(), name), ops.end()) << name;
    EXPECT_THROW(run_gradcheck("no_such_op", 1e-3, 1), UsageError);
    const auto one = run_gradcheck("adain", 1e-3, 3);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_TRUE(one[0].passed);
}
