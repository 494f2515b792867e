#include "spgan/discriminator.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "spgan/ops.hpp"
#include "spgan/rng.hpp"

namespace spgan {

namespace {

Tensor gaussian(Shape shape, double std, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(std * rng.normal());
    return t;
}

double fan_in(const Shape& s) {
    int64_t f = 1;
    for (size_t i = 1; i < s.size(); ++i) f *= s[i];
    return static_cast<double>(f);
}

void check_resolution(int r, const char* who) {
    if (r < 16 || !std::has_single_bit(static_cast<unsigned>(r)))
        throw ConfigError(std::string(who) + ": resolution must be a power of 2 >= 16, got " + std::to_string(r));
}

}  // namespace

ProjectionNet::ProjectionNet(int resolution, uint64_t seed) : resolution_(resolution), seed_(seed) {
    check_resolution(resolution, "ProjectionNet");
    Rng rng(derive_seed(seed, "projection.init"));
    auto add = [&](const std::string& name, Shape shape, double std) {
        Tensor t = std == 0.0 ? Tensor(shape) : gaussian(shape, std, rng);
        weights_.add(name, t);
        return t;
    };
    int64_t in = 3;
    for (size_t s = 0; s < kBackboneChannels.size(); ++s) {
        const int64_t out = kBackboneChannels[s];
        const std::string p = "backbone" + std::to_string(s);
        Shape ws{out, in, 4, 4};
        backbone_w_.push_back(add(p + ".weight", ws, std::sqrt(2.0 / fan_in(ws))));
        backbone_b_.push_back(add(p + ".bias", {out}, 0.0));
        in = out;
    }
    for (size_t s = 0; s < kBackboneChannels.size(); ++s) {
        Shape ws{kMixChannels, kBackboneChannels[s], 1, 1};
        mix_w_.push_back(add("mix" + std::to_string(s) + ".weight", ws, std::sqrt(1.0 / fan_in(ws))));
    }
    for (size_t s = 0; s + 1 < kBackboneChannels.size(); ++s) {
        Shape ws{kMixChannels, kMixChannels, 3, 3};
        merge_w_.push_back(add("merge" + std::to_string(s) + ".weight", ws, std::sqrt(1.0 / fan_in(ws))));
        merge_b_.push_back(add("merge" + std::to_string(s) + ".bias", {kMixChannels}, 0.0));
    }
}

FeaturePyramid ProjectionNet::project(const Tensor& images) const {
    if (images.ndim() != 4 || images.dim(1) != 3 || images.dim(2) != resolution_ || images.dim(3) != resolution_)
        throw ConfigError("project: expected [N,3," + std::to_string(resolution_) + "," + std::to_string(resolution_) +
                          "] images, got " + shape_str(images.shape()));
    const size_t levels = kBackboneChannels.size();
    std::vector<Tensor> mixed(levels);
    Tensor f = images;
    for (size_t s = 0; s < levels; ++s) {
        f = leaky_relu(conv2d(f, backbone_w_[s], backbone_b_[s], 2, 1), 0.2);
        mixed[s] = conv2d(f, mix_w_[s], Tensor(), 1, 0);
    }
    FeaturePyramid out;
    out.levels.resize(levels);
    out.levels[levels - 1] = mixed[levels - 1];
    for (size_t s = levels - 1; s-- > 0;) {
        Tensor merged = add(mixed[s], upsample_nearest(out.levels[s + 1], 2));
        out.levels[s] = conv2d(merged, merge_w_[s], merge_b_[s], 1, 1);
    }
    return out;
}

uint64_t ProjectionNet::checksum() const {
    uint64_t h = fnv1a("");
    for (const auto& [name, t] : weights_.entries()) {
        h = fnv1a(name, h);
        const auto d = t.data();
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(d.data()), d.size_bytes()), h);
    }
    return h;
}

DiscriminatorHeads::DiscriminatorHeads(int resolution, uint64_t seed) {
    check_resolution(resolution, "DiscriminatorHeads");
    Rng rng(derive_seed(seed, "heads.init"));
    const int64_t in_ch = ProjectionNet::kMixChannels, hid = kHiddenChannels;
    for (int m = 0; m < kNumHeads; ++m) {
        int64_t size = resolution >> (m + 1);
        std::vector<HeadStage> stages;
        int64_t c = in_ch;
        for (int k = 0; k < 2; ++k) {
            HeadStage st;
            // Levels already at 1x1 cannot be halved; keep the stage as a same-size 3x3 conv.
            const int64_t kernel = size >= 2 ? 4 : 3;
            st.stride = size >= 2 ? 2 : 1;
            st.padding = 1;
            Shape ws{hid, c, kernel, kernel};
            st.weight = gaussian(ws, std::sqrt(2.0 / fan_in(ws)), rng);
            st.bias = Tensor(Shape{hid});
            if (size >= 2) size /= 2;
            stages.push_back(st);
            c = hid;
        }
        HeadStage last;
        last.stride = 1;
        last.padding = 0;
        Shape ws{1, hid, 1, 1};
        last.weight = gaussian(ws, std::sqrt(1.0 / fan_in(ws)), rng);
        last.bias = Tensor(Shape{1});
        stages.push_back(last);

        const std::string p = "head" + std::to_string(m);
        for (size_t k = 0; k < stages.size(); ++k) {
            stages[k].weight.set_requires_grad(true);
            stages[k].bias.set_requires_grad(true);
            params_.add(p + ".conv" + std::to_string(k) + ".weight", stages[k].weight);
            params_.add(p + ".conv" + std::to_string(k) + ".bias", stages[k].bias);
        }
        heads_.push_back(std::move(stages));
    }
}

Tensor DiscriminatorHeads::discriminate_one(int head, const Tensor& level) const {
    const auto& stages = heads_.at(static_cast<size_t>(head));
    Tensor h = level;
    for (size_t k = 0; k < stages.size(); ++k) {
        h = conv2d(h, stages[k].weight, stages[k].bias, stages[k].stride, stages[k].padding);
        if (k + 1 < stages.size()) h = leaky_relu(h, 0.2);
    }
    return h;
}

std::vector<Tensor> DiscriminatorHeads::discriminate(const FeaturePyramid& pyramid) const {
    if (pyramid.levels.size() != heads_.size())
        throw ConfigError("discriminate: pyramid has " + std::to_string(pyramid.levels.size()) + " levels, expected " +
                          std::to_string(heads_.size()));
    std::vector<Tensor> out;
    for (size_t m = 0; m < heads_.size(); ++m) {
        const Tensor& lv = pyramid.levels[m];
        if (lv.ndim() != 4 || lv.dim(1) != heads_[m][0].weight.dim(1))
            throw ConfigError("discriminate: level " + std::to_string(m) + " has shape " + shape_str(lv.shape()));
        out.push_back(discriminate_one(static_cast<int>(m), lv));
    }
    return out;
}

Tensor loss_d_head(const Tensor& real_logits, const Tensor& fake_logits) {
    return add(mean(softplus(scale(real_logits, -1.0))), mean(softplus(fake_logits)));
}

Tensor loss_d(const std::vector<Tensor>& real_logits, const std::vector<Tensor>& fake_logits) {
    if (real_logits.empty() || fake_logits.empty()) throw UsageError("loss_d: empty logit list");
    if (real_logits.size() != fake_logits.size())
        throw ConfigError("loss_d: " + std::to_string(real_logits.size()) + " real vs " +
                          std::to_string(fake_logits.size()) + " fake logit maps");
    Tensor total = loss_d_head(real_logits[0], fake_logits[0]);
    for (size_t m = 1; m < real_logits.size(); ++m) total = add(total, loss_d_head(real_logits[m], fake_logits[m]));
    return total;
}

Tensor loss_g(const std::vector<Tensor>& fake_logits) {
    if (fake_logits.empty()) throw UsageError("loss_g: empty logit list");
    Tensor total = mean(softplus(scale(fake_logits[0], -1.0)));
    for (size_t m = 1; m < fake_logits.size(); ++m) total = add(total, mean(softplus(scale(fake_logits[m], -1.0))));
    return total;
}

}  // namespace spgan
