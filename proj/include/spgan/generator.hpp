#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "spgan/nn.hpp"
#include "spgan/params.hpp"

namespace spgan {

enum class BlockKind { original, light };
enum class SleVariant { none, deep, lite };
enum class RootKind { constant, noise_projected };

std::string to_string(BlockKind k);
std::string to_string(SleVariant v);
std::string to_string(RootKind r);

struct SlePair {
    int low_res = 0;
    int high_res = 0;
    bool operator==(const SlePair&) const = default;
};

// Synthesis layer l (1-based) runs at resolution 4 << l; L1/L2/L3 are 8/16/32.
struct GeneratorConfig {
    int z_dim = 256;
    int w_dim = 256;
    int mapping_depth = 2;
    int out_res = 256;
    int base_channels = 512;
    std::vector<int> adain_layers;     // subset of {1,2,3}
    std::vector<BlockKind> fg_blocks;  // one per layer; empty selects light at AdaIN layers, original elsewhere
    SleVariant sle_variant = SleVariant::deep;
    std::vector<SlePair> sle_pairs;    // empty with a non-none variant selects the default pairing
    bool adain_with_sle = false;
    RootKind root = RootKind::constant;

    int num_layers() const;
    static int layer_resolution(int layer) { return 4 << layer; }
    // base_channels up to 32x32, then halved per doubling, never below 8.
    int channels_at(int res) const;
    bool is_adain_layer(int layer) const;
    // AdaIN after the block: adain_layers, plus SLE targets when adain_with_sle is set.
    bool has_style_site(int layer) const;
    bool has_mapping() const;
};

// Fills fg_blocks and sle_pairs defaults. Does not validate.
GeneratorConfig resolve(GeneratorConfig config);
std::vector<SlePair> default_sle_pairs(int out_res);

// Every violated invariant, human readable; empty when valid.
std::vector<std::string> config_violations(const GeneratorConfig& config);
// Throws ConfigError listing the violations.
void validate(const GeneratorConfig& config);

struct MappingParams {
    std::vector<Tensor> weights;  // [w_dim, z_dim] first, then [w_dim, w_dim]
    std::vector<Tensor> biases;
    int depth() const { return static_cast<int>(weights.size()); }
};

struct StyleVector {
    Tensor w;  // [N, w_dim]
};

// Raw outputs are (scale_delta, bias); y_scale = 1 + scale_delta so a zero head gives (1, 0).
struct AffineHead {
    Tensor weight;  // [2C, w_dim]
    Tensor bias;    // [2C]
    int64_t channels() const { return weight.dim(0) / 2; }
};

struct OriginalBlockParams {
    Tensor conv1_w, conv1_b;
    nn::NoiseParams noise1;
    nn::BatchNormState bn1;
    Tensor conv2_w, conv2_b;
    nn::NoiseParams noise2;
    nn::BatchNormState bn2;
};

// No conv bias: the block always feeds a normalization or a learned per-channel shift.
struct LightBlockParams {
    Tensor conv_w;
    nn::NoiseParams noise;
};

struct SleParams {
    SleVariant variant = SleVariant::deep;
    Tensor conv4_w, conv4_b;  // [C_low, C_low, 4, 4]
    Tensor conv1_w, conv1_b;  // [C_high, C_low, 1, 1]
    // Test hook: saturates the sigmoid so the gate is exactly 1.
    void force_open_gate();
};

struct ForwardOptions {
    bool training = true;   // batch norm mode
    bool noise = true;      // inject noise (scale * eps); off means the noise term is omitted
    bool style_as_instance_norm = false;  // replace every AdaIN by plain instance_norm
};

StyleVector map_latent(const Tensor& z, const MappingParams& params);
std::pair<Tensor, Tensor> affine(const StyleVector& w, const AffineHead& head);
Tensor fg_block_original(const Tensor& x, OriginalBlockParams& p, Rng& rng, const ForwardOptions& opt = {});
Tensor fg_block_light(const Tensor& x, const LightBlockParams& p, Rng& rng, const ForwardOptions& opt = {});
Tensor sle_gate(const Tensor& x_low, const SleParams& p);
Tensor sle(const Tensor& x_low, const Tensor& x_high, const SleParams& p);

struct LayerParams {
    int layer = 0;
    BlockKind kind = BlockKind::original;
    OriginalBlockParams original;
    LightBlockParams light;
    bool has_style = false;
    AffineHead style;
};

struct GeneratorParams {
    Tensor root_const;  // [1, C0, 4, 4]
    Tensor root_w, root_b;  // noise_projected root: [C0*16, z_dim]
    MappingParams mapping;
    std::vector<LayerParams> layers;
    std::vector<SleParams> sle;  // parallel to config.sle_pairs
    Tensor out_w, out_b;
};

enum class Init { he, unit_normal, final_layer, affine, zeros, ones };

struct ParamDecl {
    std::string name;
    Shape shape;
    Init init = Init::he;
    bool trainable = true;
};

// Walks the parameter tree of a (resolved, valid) config. The callback returns the tensor
// bound into the tree, or an undefined tensor when only the layout is wanted.
GeneratorParams declare_generator(const GeneratorConfig& config, const std::function<Tensor(const ParamDecl&)>& fn);

struct ParamCount {
    std::vector<std::pair<std::string, int64_t>> per_submodule;  // in declaration order
    int64_t total = 0;
};

// Trainable parameters only; batch-norm running statistics are buffers.
ParamCount count_params(const GeneratorConfig& config);

// The same config with every block original, AdaIN removed (and with it the mapping network
// and affine heads); root and SLE unchanged.
GeneratorConfig original_baseline(GeneratorConfig config);

class Generator {
   public:
    Generator(const GeneratorConfig& config, uint64_t seed);

    const GeneratorConfig& config() const { return config_; }
    Tensor generate(const Tensor& z, Rng& noise_rng, const ForwardOptions& opt = {});
    StyleVector style(const Tensor& z) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    ParamStore& buffers() { return buffers_; }
    const ParamStore& buffers() const { return buffers_; }
    GeneratorParams& tree() { return tree_; }

   private:
    GeneratorConfig config_;
    ParamStore params_;
    ParamStore buffers_;
    GeneratorParams tree_;
};

}  // namespace spgan
