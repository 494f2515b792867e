#include <gtest/gtest.h>

#include <cmath>

#include "spgan/discriminator.hpp"
#include "spgan/generator.hpp"
#include "spgan/rng.hpp"

using namespace spgan;

namespace {

Tensor random_images(int64_t n, int res, Rng& rng) {
    Tensor t({n, 3, res, res});
    for (auto& v : t.data()) v = static_cast<float>(std::tanh(rng.normal()));
    return t;
}

Tensor filled(Shape s, float v) { return Tensor(std::move(s), v); }

}  // namespace

TEST(Projection, PyramidShapesForRes64) {
    const ProjectionNet net(64, 1);
    Rng rng(2);
    const FeaturePyramid p = net.project(random_images(2, 64, rng));
    ASSERT_EQ(p.levels.size(), 4u);
    const int64_t sizes[] = {32, 16, 8, 4};
    for (int m = 0; m < 4; ++m) {
        EXPECT_EQ(p.levels[m].shape(), (Shape{2, ProjectionNet::kMixChannels, sizes[m], sizes[m]}));
    }
    EXPECT_THROW(net.project(random_images(2, 32, rng)), ConfigError);
    EXPECT_THROW(ProjectionNet(24, 1), ConfigError);
}

TEST(Projection, DeterministicAndSeeded) {
    const ProjectionNet a(32, 5), b(32, 5), c(32, 6);
    EXPECT_EQ(a.checksum(), b.checksum());
    EXPECT_NE(a.checksum(), c.checksum());
    Rng rng(3);
    const Tensor x = random_images(2, 32, rng);
    const FeaturePyramid p1 = a.project(x), p2 = a.project(x);
    for (int m = 0; m < 4; ++m)
        for (int64_t i = 0; i < p1.levels[m].numel(); ++i) ASSERT_EQ(p1.levels[m].data()[i], p2.levels[m].data()[i]);
    for (const auto& [name, t] : a.weights().entries()) EXPECT_FALSE(t.requires_grad()) << name;
}

TEST(Projection, GradientFlowsToImagesNotWeights) {
    const ProjectionNet net(32, 7);
    Rng rng(8);
    Tensor x = random_images(2, 32, rng);
    x.set_requires_grad(true);
    const uint64_t before = net.checksum();
    Tape tape;
    Tape::Scope scope(tape);
    const FeaturePyramid p = net.project(x);
    Tensor total = sum(p.levels[0]);
    for (int m = 1; m < 4; ++m) total = add(total, sum(p.levels[m]));
    backward(total);
    int nonzero = 0;
    for (float g : x.grad()) nonzero += g != 0.0f;
    EXPECT_GT(nonzero, 0);
    for (const auto& [name, t] : net.weights().entries()) EXPECT_FALSE(t.has_grad()) << name;
    EXPECT_EQ(net.checksum(), before);

    // Finite-difference spot check on one pixel.
    Tape::Pause pause;
    auto f = [&] {
        const FeaturePyramid q = net.project(x);
        double s = 0;
        for (int m = 0; m < 4; ++m)
            for (float v : q.levels[m].data()) s += v;
        return s;
    };
    const size_t idx = 3 * 32 + 5;
    const float saved = x.data()[idx];
    const float h = 2e-3f;
    x.data()[idx] = saved + h;
    const double fp = f();
    x.data()[idx] = saved - h;
    const double fm = f();
    x.data()[idx] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    EXPECT_NEAR(x.grad()[idx], fd, 2e-2 * std::max(1.0, std::abs(fd)));
}

TEST(Heads, FourFiniteLogitMaps) {
    const ProjectionNet net(32, 1);
    const DiscriminatorHeads heads(32, 2);
    Rng rng(3);
    const auto logits = heads.discriminate(net.project(random_images(4, 32, rng)));
    ASSERT_EQ(logits.size(), static_cast<size_t>(kNumHeads));
    for (const auto& l : logits) {
        EXPECT_EQ(l.dim(0), 4);
        EXPECT_EQ(l.dim(1), 1);
        for (float v : l.data()) {
            EXPECT_TRUE(std::isfinite(v));
            EXPECT_LT(std::abs(v), 100.0f);
        }
    }
    // Patch logits: the two finest levels keep a spatial map.
    EXPECT_GT(logits[0].dim(2), 1);
}

TEST(Heads, PerturbingOneHeadChangesOnlyItsOutput) {
    const ProjectionNet net(64, 1);
    DiscriminatorHeads heads(64, 2);
    Rng rng(3);
    const FeaturePyramid p = net.project(random_images(2, 64, rng));
    const auto before = heads.discriminate(p);
    for (int m = 0; m < kNumHeads; ++m) {
        Tensor w = heads.params().at("head" + std::to_string(m) + ".conv0.weight");
        const std::vector<float> saved(w.data().begin(), w.data().end());
        for (auto& v : w.data()) v += 0.05f;
        const auto after = heads.discriminate(p);
        for (int k = 0; k < kNumHeads; ++k) {
            bool same = true;
            for (int64_t i = 0; i < after[k].numel(); ++i) same = same && after[k].data()[i] == before[k].data()[i];
            EXPECT_EQ(same, k != m) << "perturbed " << m << " output " << k;
        }
        std::copy(saved.begin(), saved.end(), w.data().begin());
    }
}

TEST(Heads, NoSharedParameters) {
    const DiscriminatorHeads heads(32, 1);
    const auto& e = heads.params().entries();
    for (size_t i = 0; i < e.size(); ++i)
        for (size_t j = i + 1; j < e.size(); ++j) EXPECT_FALSE(e[i].second.same_storage(e[j].second));
}

TEST(Heads, MismatchedPyramidIsConfigError) {
    const DiscriminatorHeads heads(32, 1);
    FeaturePyramid p;
    p.levels.resize(3);
    EXPECT_THROW(heads.discriminate(p), ConfigError);
}

TEST(Losses, ZeroLogits) {
    std::vector<Tensor> r, f;
    for (int m = 0; m < kNumHeads; ++m) {
        r.push_back(filled({2, 1, 4, 4}, 0.0f));
        f.push_back(filled({2, 1, 4, 4}, 0.0f));
    }
    EXPECT_NEAR(loss_d(r, f).item(), 2.0 * kNumHeads * std::log(2.0), 1e-6);
    EXPECT_NEAR(loss_g(f).item(), kNumHeads * std::log(2.0), 1e-6);
}

TEST(Losses, PerfectDiscriminatorLimit) {
    std::vector<Tensor> r{filled({2, 1, 2, 2}, 1e3f)}, f{filled({2, 1, 2, 2}, -1e3f)};
    EXPECT_NEAR(loss_d(r, f).item(), 0.0, 1e-6);
}

TEST(Losses, SoftplusMatchesLogSigmoid) {
    std::vector<float> grid;
    for (int i = 0; i <= 200; ++i) grid.push_back(-10.0f + 0.1f * static_cast<float>(i));
    const Tensor t({static_cast<int64_t>(grid.size())}, grid);
    const Tensor sp = softplus(scale(t, -1.0));
    for (size_t i = 0; i < grid.size(); ++i) {
        const double direct = -std::log(1.0 / (1.0 + std::exp(-static_cast<double>(grid[i]))));
        EXPECT_NEAR(sp.data()[i], direct, 1e-6);
    }
}

TEST(Losses, SeparableAndNonNegative) {
    Rng rng(4);
    std::vector<Tensor> r, f;
    for (int m = 0; m < kNumHeads; ++m) {
        Tensor a({3, 1, 2, 2}), b({3, 1, 2, 2});
        for (auto& v : a.data()) v = static_cast<float>(3 * rng.normal());
        for (auto& v : b.data()) v = static_cast<float>(3 * rng.normal());
        r.push_back(a);
        f.push_back(b);
    }
    double parts = 0;
    for (int m = 0; m < kNumHeads; ++m) parts += loss_d_head(r[m], f[m]).item();
    EXPECT_NEAR(loss_d(r, f).item(), parts, 1e-5);
    EXPECT_GE(loss_d(r, f).item(), 0.0f);
    EXPECT_GE(loss_g(f).item(), 0.0f);
    EXPECT_THROW(loss_d({}, {}), UsageError);
    EXPECT_THROW(loss_g({}), UsageError);
    EXPECT_THROW(loss_d(r, {f[0]}), ConfigError);
}

TEST(Losses, GeneratorGradientIsNonZeroAtInit) {
    for (uint64_t seed : {1, 2, 3}) {
        GeneratorConfig c;
        c.z_dim = c.w_dim = 8;
        c.out_res = 32;
        c.base_channels = 8;
        c.adain_layers = {1};
        c.sle_pairs = {{8, 32}};
        Generator g(c, seed);
        const ProjectionNet net(32, seed);
        const DiscriminatorHeads heads(32, seed);
        Rng zr(seed), nr(seed + 1);
        Tensor z({4, 8});
        for (auto& v : z.data()) v = static_cast<float>(zr.normal());
        g.params().zero_grad();
        Tape tape;
        Tape::Scope scope(tape);
        backward(loss_g(heads.discriminate(net.project(g.generate(z, nr)))));
        double norm = 0;
        for (const auto& [name, t] : g.params().entries())
            for (float v : t.grad()) norm += double(v) * v;
        EXPECT_GT(norm, 0.0) << "seed " << seed;
    }
}
