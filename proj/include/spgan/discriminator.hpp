#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "spgan/params.hpp"

namespace spgan {

inline constexpr int kNumHeads = 4;

struct FeaturePyramid {
    std::vector<Tensor> levels;  // resolutions R/2, R/4, R/8, R/16
};

// Fixed random feature projection: a strided conv backbone, per-scale 1x1 channel mixing
// and a top-down upsample-and-add path with 3x3 convs. Weights never require gradients,
// but gradients flow through them to the images.
class ProjectionNet {
   public:
    static constexpr std::array<int64_t, 4> kBackboneChannels{16, 32, 64, 64};
    static constexpr int64_t kMixChannels = 32;

    ProjectionNet(int resolution, uint64_t seed);

    int resolution() const { return resolution_; }
    uint64_t seed() const { return seed_; }
    FeaturePyramid project(const Tensor& images) const;
    // FNV-1a over the raw bytes of every weight.
    uint64_t checksum() const;
    const ParamStore& weights() const { return weights_; }

   private:
    int resolution_;
    uint64_t seed_;
    ParamStore weights_;
    std::vector<Tensor> backbone_w_, backbone_b_, mix_w_, merge_w_, merge_b_;
};

struct HeadStage {
    Tensor weight, bias;
    int stride = 2;
    int padding = 1;
};

// One stack per pyramid level; stacks share nothing.
class DiscriminatorHeads {
   public:
    static constexpr int64_t kHiddenChannels = 32;

    DiscriminatorHeads(int resolution, uint64_t seed);

    // Patch logits, one [N,1,h,w] map per level.
    std::vector<Tensor> discriminate(const FeaturePyramid& pyramid) const;
    Tensor discriminate_one(int head, const Tensor& level) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const std::vector<HeadStage>& stages(int head) const { return heads_.at(static_cast<size_t>(head)); }

   private:
    ParamStore params_;
    std::vector<std::vector<HeadStage>> heads_;
};

// Non-saturating logistic losses summed over heads.
Tensor loss_d(const std::vector<Tensor>& real_logits, const std::vector<Tensor>& fake_logits);
Tensor loss_g(const std::vector<Tensor>& fake_logits);
// Head m's contribution to loss_d.
Tensor loss_d_head(const Tensor& real_logits, const Tensor& fake_logits);

}  // namespace spgan
