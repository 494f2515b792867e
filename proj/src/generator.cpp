#include "spgan/generator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace spgan {

namespace {

bool is_pow2(int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); }

int log2i(int v) { return std::bit_width(static_cast<unsigned>(v)) - 1; }

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

std::string to_string(BlockKind k) { return k == BlockKind::light ? "light" : "original"; }

std::string to_string(SleVariant v) {
    switch (v) {
        case SleVariant::none: return "none";
        case SleVariant::deep: return "deep";
        case SleVariant::lite: return "lite";
    }
    return "?";
}

std::string to_string(RootKind r) { return r == RootKind::constant ? "const" : "noise-projected"; }

int GeneratorConfig::num_layers() const {
    if (!is_pow2(out_res) || out_res < 8) return 0;
    return log2i(out_res) - 2;
}

int GeneratorConfig::channels_at(int res) const {
    int c = base_channels;
    for (int r = 32; r < res; r *= 2) c = std::max(8, c / 2);
    return c;
}

bool GeneratorConfig::is_adain_layer(int layer) const {
    return std::find(adain_layers.begin(), adain_layers.end(), layer) != adain_layers.end();
}

bool GeneratorConfig::has_style_site(int layer) const {
    if (is_adain_layer(layer)) return true;
    if (!adain_with_sle) return false;
    const int res = layer_resolution(layer);
    return std::any_of(sle_pairs.begin(), sle_pairs.end(), [&](const SlePair& p) { return p.high_res == res; });
}

bool GeneratorConfig::has_mapping() const {
    for (int l = 1; l <= num_layers(); ++l)
        if (has_style_site(l)) return true;
    return false;
}

std::vector<SlePair> default_sle_pairs(int out_res) {
    if (out_res >= 64) return {{8, out_res / 2}, {16, out_res}};
    return {{8, out_res}};
}

GeneratorConfig resolve(GeneratorConfig config) {
    const int layers = config.num_layers();
    if (config.fg_blocks.empty() && layers > 0) {
        for (int l = 1; l <= layers; ++l)
            config.fg_blocks.push_back(config.is_adain_layer(l) ? BlockKind::light : BlockKind::original);
    }
    if (config.sle_variant != SleVariant::none && config.sle_pairs.empty() && layers > 0)
        config.sle_pairs = default_sle_pairs(config.out_res);
    return config;
}

std::vector<std::string> config_violations(const GeneratorConfig& c) {
    std::vector<std::string> v;
    if (c.z_dim < 1) v.push_back("z_dim must be >= 1");
    if (c.w_dim < 1) v.push_back("w_dim must be >= 1");
    if (c.mapping_depth != 2 && c.mapping_depth != 4 && c.mapping_depth != 8)
        v.push_back("mapping_depth must be one of 2, 4, 8 (got " + std::to_string(c.mapping_depth) + ")");
    if (!is_pow2(c.out_res) || c.out_res < 32 || c.out_res > 256)
        v.push_back("out_res must be a power of 2 in [32, 256] (got " + std::to_string(c.out_res) + ")");
    if (c.base_channels < 1) v.push_back("base_channels must be >= 1");

    const int layers = c.num_layers();
    std::vector<int> seen;
    for (int l : c.adain_layers) {
        if (l < 1 || l > 3) v.push_back("adain layer L" + std::to_string(l) + " is not one of L1, L2, L3");
        else if (l > layers) v.push_back("adain layer L" + std::to_string(l) + " exceeds the synthesis depth");
        if (std::find(seen.begin(), seen.end(), l) != seen.end())
            v.push_back("adain layer L" + std::to_string(l) + " listed twice");
        seen.push_back(l);
    }

    if (layers > 0 && static_cast<int>(c.fg_blocks.size()) != layers)
        v.push_back("fg_blocks has " + std::to_string(c.fg_blocks.size()) + " entries, synthesis path has " +
                    std::to_string(layers) + " layers");
    if (!c.adain_with_sle) {
        for (int l : c.adain_layers) {
            if (l >= 1 && l <= static_cast<int>(c.fg_blocks.size()) && c.fg_blocks[l - 1] != BlockKind::light)
                v.push_back("AdaIN layer L" + std::to_string(l) + " must use the light block");
        }
    }

    if (c.sle_variant == SleVariant::none && !c.sle_pairs.empty())
        v.push_back("sle_pairs given but sle_variant is none");
    if (c.adain_with_sle && c.sle_pairs.empty()) v.push_back("adain_with_sle needs at least one SLE pair");
    for (const auto& p : c.sle_pairs) {
        const std::string tag = "sle pair (" + std::to_string(p.low_res) + ", " + std::to_string(p.high_res) + ")";
        if (!is_pow2(p.low_res) || !is_pow2(p.high_res)) v.push_back(tag + ": resolutions must be powers of 2");
        if (p.low_res >= p.high_res) v.push_back(tag + ": low_res must be < high_res");
        if (p.low_res < 4 || p.high_res > c.out_res) v.push_back(tag + ": resolutions must lie on the synthesis path");
        for (int l : c.adain_layers) {
            if (GeneratorConfig::layer_resolution(l) >= p.high_res)
                v.push_back("AdaIN layer L" + std::to_string(l) + " resolution " +
                            std::to_string(GeneratorConfig::layer_resolution(l)) + " is not below " + tag +
                            " high_res");
        }
    }
    return v;
}

void validate(const GeneratorConfig& config) {
    const auto v = config_violations(config);
    if (!v.empty()) throw ConfigError("invalid generator config: " + join(v, "; "));
}

void SleParams::force_open_gate() {
    std::fill(conv1_b.data().begin(), conv1_b.data().end(), 1e30f);
}

StyleVector map_latent(const Tensor& z, const MappingParams& params) {
    if (params.depth() < 1) throw ConfigError("mapping network has no layers");
    Tensor h = z;
    for (int i = 0; i < params.depth(); ++i) {
        h = linear(h, params.weights[i], params.biases[i]);
        if (i + 1 < params.depth()) h = leaky_relu(h, 0.2);
    }
    return StyleVector{h};
}

std::pair<Tensor, Tensor> affine(const StyleVector& w, const AffineHead& head) {
    const int64_t c = head.channels();
    Tensor s = linear(w.w, head.weight, head.bias);
    return {add_scalar(slice_columns(s, 0, c), 1.0), slice_columns(s, c, 2 * c)};
}

namespace {

void check_block_input(const Tensor& x, const Tensor& conv_w, const char* what) {
    if (x.ndim() != 4 || x.dim(1) != conv_w.dim(1))
        throw ConfigError(std::string(what) + ": input " + shape_str(x.shape()) + " does not match conv weight " +
                          shape_str(conv_w.shape()));
}

Tensor maybe_noise(const Tensor& x, const nn::NoiseParams& p, Rng& rng, const ForwardOptions& opt) {
    return opt.noise ? nn::inject_noise(x, p, rng) : x;
}

}  // namespace

Tensor fg_block_original(const Tensor& x, OriginalBlockParams& p, Rng& rng, const ForwardOptions& opt) {
    check_block_input(x, p.conv1_w, "fg_block_original");
    Tensor h = upsample_nearest(x, 2);
    h = conv2d(h, p.conv1_w, p.conv1_b, 1, 1);
    h = maybe_noise(h, p.noise1, rng, opt);
    h = leaky_relu(nn::batch_norm(h, p.bn1, opt.training), 0.2);
    h = conv2d(h, p.conv2_w, p.conv2_b, 1, 1);
    h = maybe_noise(h, p.noise2, rng, opt);
    return leaky_relu(nn::batch_norm(h, p.bn2, opt.training), 0.2);
}

Tensor fg_block_light(const Tensor& x, const LightBlockParams& p, Rng& rng, const ForwardOptions& opt) {
    check_block_input(x, p.conv_w, "fg_block_light");
    Tensor h = conv2d(upsample_nearest(x, 2), p.conv_w, Tensor(), 1, 1);
    return maybe_noise(h, p.noise, rng, opt);
}

Tensor sle_gate(const Tensor& x_low, const SleParams& p) {
    if (x_low.ndim() != 4 || x_low.dim(1) != p.conv4_w.dim(1))
        throw ConfigError("sle: x_low " + shape_str(x_low.shape()) + " does not match gate weight " +
                          shape_str(p.conv4_w.shape()));
    Tensor g = conv2d(adaptive_avg_pool(x_low, 4), p.conv4_w, p.conv4_b, 1, 0);
    if (p.variant == SleVariant::deep) g = leaky_relu(g, 0.2);
    return sigmoid(conv2d(g, p.conv1_w, p.conv1_b, 1, 0));
}

Tensor sle(const Tensor& x_low, const Tensor& x_high, const SleParams& p) {
    if (x_high.ndim() != 4 || x_high.dim(1) != p.conv1_w.dim(0) || x_high.dim(0) != x_low.dim(0))
        throw ConfigError("sle: x_high " + shape_str(x_high.shape()) + " does not match gate output channels " +
                          std::to_string(p.conv1_w.dim(0)));
    if (x_low.ndim() != 4 || x_low.dim(2) >= x_high.dim(2))
        throw ConfigError("sle: x_low must have lower resolution than x_high");
    return channel_gate(x_high, sle_gate(x_low, p));
}

GeneratorParams declare_generator(const GeneratorConfig& c, const std::function<Tensor(const ParamDecl&)>& fn) {
    validate(c);
    auto decl = [&](std::string name, Shape shape, Init init, bool trainable = true) {
        return fn(ParamDecl{std::move(name), std::move(shape), init, trainable});
    };
    auto noise = [&](const std::string& name, int64_t ch) {
        return nn::NoiseParams{decl(name + ".scale", {ch}, Init::zeros)};
    };
    auto bn = [&](const std::string& name, int64_t ch) {
        nn::BatchNormState s;
        s.gamma = decl(name + ".gamma", {ch}, Init::ones);
        s.beta = decl(name + ".beta", {ch}, Init::zeros);
        s.running_mean = decl(name + ".running_mean", {ch}, Init::zeros, false);
        s.running_var = decl(name + ".running_var", {ch}, Init::ones, false);
        return s;
    };

    GeneratorParams g;
    const int64_t c0 = c.channels_at(4);
    if (c.root == RootKind::constant) {
        g.root_const = decl("root.const", {1, c0, 4, 4}, Init::unit_normal);
    } else {
        g.root_w = decl("root.weight", {c0 * 16, c.z_dim}, Init::he);
        g.root_b = decl("root.bias", {c0 * 16}, Init::zeros);
    }

    if (c.has_mapping()) {
        for (int i = 0; i < c.mapping_depth; ++i) {
            const int64_t in = i == 0 ? c.z_dim : c.w_dim;
            const std::string p = "mapping." + std::to_string(i);
            g.mapping.weights.push_back(decl(p + ".weight", {c.w_dim, in}, Init::he));
            g.mapping.biases.push_back(decl(p + ".bias", {c.w_dim}, Init::zeros));
        }
    }

    int64_t prev = c0;
    for (int l = 1; l <= c.num_layers(); ++l) {
        const int64_t ch = c.channels_at(GeneratorConfig::layer_resolution(l));
        const std::string p = "layer" + std::to_string(l);
        LayerParams lp;
        lp.layer = l;
        lp.kind = c.fg_blocks[l - 1];
        if (lp.kind == BlockKind::original) {
            auto& o = lp.original;
            o.conv1_w = decl(p + ".conv1.weight", {ch, prev, 3, 3}, Init::he);
            o.conv1_b = decl(p + ".conv1.bias", {ch}, Init::zeros);
            o.noise1 = noise(p + ".noise1", ch);
            o.bn1 = bn(p + ".bn1", ch);
            o.conv2_w = decl(p + ".conv2.weight", {ch, ch, 3, 3}, Init::he);
            o.conv2_b = decl(p + ".conv2.bias", {ch}, Init::zeros);
            o.noise2 = noise(p + ".noise2", ch);
            o.bn2 = bn(p + ".bn2", ch);
        } else {
            lp.light.conv_w = decl(p + ".conv.weight", {ch, prev, 3, 3}, Init::he);
            lp.light.noise = noise(p + ".noise", ch);
        }
        if (c.has_style_site(l)) {
            lp.has_style = true;
            const std::string a = "affine" + std::to_string(l);
            lp.style.weight = decl(a + ".weight", {2 * ch, c.w_dim}, Init::affine);
            lp.style.bias = decl(a + ".bias", {2 * ch}, Init::zeros);
        }
        g.layers.push_back(std::move(lp));
        prev = ch;
    }

    for (const auto& pair : c.sle_pairs) {
        const int64_t lo = c.channels_at(pair.low_res);
        const int64_t hi = c.channels_at(pair.high_res);
        const std::string p = "sle_" + std::to_string(pair.low_res) + "_" + std::to_string(pair.high_res);
        SleParams s;
        s.variant = c.sle_variant;
        s.conv4_w = decl(p + ".conv4.weight", {lo, lo, 4, 4}, Init::he);
        s.conv4_b = decl(p + ".conv4.bias", {lo}, Init::zeros);
        s.conv1_w = decl(p + ".conv1.weight", {hi, lo, 1, 1}, Init::he);
        s.conv1_b = decl(p + ".conv1.bias", {hi}, Init::zeros);
        g.sle.push_back(std::move(s));
    }

    g.out_w = decl("to_rgb.weight", {3, prev, 3, 3}, Init::final_layer);
    g.out_b = decl("to_rgb.bias", {3}, Init::zeros);
    return g;
}

ParamCount count_params(const GeneratorConfig& config) {
    ParamCount out;
    declare_generator(resolve(config), [&](const ParamDecl& d) {
        if (!d.trainable) return Tensor();
        const std::string sub = d.name.substr(0, d.name.find('.'));
        const int64_t n = shape_numel(d.shape);
        if (out.per_submodule.empty() || out.per_submodule.back().first != sub)
            out.per_submodule.emplace_back(sub, 0);
        out.per_submodule.back().second += n;
        out.total += n;
        return Tensor();
    });
    return out;
}

GeneratorConfig original_baseline(GeneratorConfig config) {
    config = resolve(std::move(config));
    config.adain_layers.clear();
    config.adain_with_sle = false;
    std::fill(config.fg_blocks.begin(), config.fg_blocks.end(), BlockKind::original);
    return config;
}

namespace {

void init_tensor(Tensor& t, Init init, Rng& rng) {
    const auto& s = t.shape();
    int64_t fan_in = 1;
    for (size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
    double std = 0.0;
    switch (init) {
        case Init::zeros: return;
        case Init::ones: std::fill(t.data().begin(), t.data().end(), 1.0f); return;
        case Init::unit_normal: std = 1.0; break;
        case Init::he: std = std::sqrt(2.0 / static_cast<double>(fan_in)); break;
        case Init::final_layer: std = std::sqrt(1.0 / static_cast<double>(fan_in)); break;
        case Init::affine: std = 0.5 / std::sqrt(static_cast<double>(fan_in)); break;
    }
    for (auto& v : t.data()) v = static_cast<float>(std * rng.normal());
}

}  // namespace

Generator::Generator(const GeneratorConfig& config, uint64_t seed) : config_(resolve(config)) {
    Rng rng(derive_seed(seed, "generator.init"));
    tree_ = declare_generator(config_, [&](const ParamDecl& d) {
        Tensor t(d.shape);
        init_tensor(t, d.init, rng);
        if (d.trainable) {
            t.set_requires_grad(true);
            params_.add(d.name, t);
        } else {
            buffers_.add(d.name, t);
        }
        return t;
    });
}

StyleVector Generator::style(const Tensor& z) const { return map_latent(z, tree_.mapping); }

Tensor Generator::generate(const Tensor& z, Rng& noise_rng, const ForwardOptions& opt) {
    if (z.ndim() != 2 || z.dim(1) != config_.z_dim)
        throw ConfigError("generate: z must be [N, " + std::to_string(config_.z_dim) + "], got " +
                          shape_str(z.shape()));
    const int64_t n = z.dim(0);
    const int64_t c0 = config_.channels_at(4);

    Tensor x;
    if (config_.root == RootKind::constant) {
        x = broadcast_batch(tree_.root_const, n);
    } else {
        x = leaky_relu(reshape(linear(z, tree_.root_w, tree_.root_b), {n, c0, 4, 4}), 0.2);
    }

    StyleVector w;
    if (config_.has_mapping()) w = style(z);

    std::vector<Tensor> feats{x};
    for (auto& lp : tree_.layers) {
        if (lp.kind == BlockKind::original) {
            x = fg_block_original(x, lp.original, noise_rng, opt);
        } else {
            x = fg_block_light(x, lp.light, noise_rng, opt);
        }
        if (lp.has_style) {
            if (opt.style_as_instance_norm) {
                x = nn::instance_norm(x);
            } else {
                auto [ys, yb] = affine(w, lp.style);
                x = nn::adain(x, ys, yb);
            }
        }
        if (lp.kind == BlockKind::light) x = leaky_relu(x, 0.2);

        const int res = GeneratorConfig::layer_resolution(lp.layer);
        for (size_t k = 0; k < config_.sle_pairs.size(); ++k) {
            if (config_.sle_pairs[k].high_res != res) continue;
            x = sle(feats[log2i(config_.sle_pairs[k].low_res) - 2], x, tree_.sle[k]);
        }
        feats.push_back(x);
    }
    return tanh(conv2d(x, tree_.out_w, tree_.out_b, 1, 1));
}

}  // namespace spgan
