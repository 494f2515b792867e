#include "spgan/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "spgan/rng.hpp"

namespace spgan {

namespace {

struct Value {
    enum class Kind { integer, real, boolean, string, array };
    Kind kind = Kind::integer;
    int64_t i = 0;
    double d = 0.0;
    bool b = false;
    std::string s;
    std::vector<Value> items;
};

class LineParser {
   public:
    LineParser(std::string_view text, std::string where) : t_(text), where_(std::move(where)) {}

    Value value() {
        skip_ws();
        if (pos_ >= t_.size()) fail("missing value");
        const char c = t_[pos_];
        if (c == '[') return array();
        if (c == '"') return string();
        if (t_.substr(pos_, 4) == "true") return boolean(true, 4);
        if (t_.substr(pos_, 5) == "false") return boolean(false, 5);
        return number();
    }

    void expect_end() {
        skip_ws();
        if (pos_ != t_.size()) fail("unexpected trailing text '" + std::string(t_.substr(pos_)) + "'");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where_ + ": " + msg); }

   private:
    void skip_ws() {
        while (pos_ < t_.size() && (t_[pos_] == ' ' || t_[pos_] == '\t')) ++pos_;
    }

    Value boolean(bool v, size_t len) {
        pos_ += len;
        Value out;
        out.kind = Value::Kind::boolean;
        out.b = v;
        return out;
    }

    Value string() {
        ++pos_;
        Value out;
        out.kind = Value::Kind::string;
        while (pos_ < t_.size() && t_[pos_] != '"') out.s += t_[pos_++];
        if (pos_ >= t_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    Value array() {
        ++pos_;
        Value out;
        out.kind = Value::Kind::array;
        skip_ws();
        if (pos_ < t_.size() && t_[pos_] == ']') {
            ++pos_;
            return out;
        }
        for (;;) {
            out.items.push_back(value());
            skip_ws();
            if (pos_ >= t_.size()) fail("unterminated array");
            if (t_[pos_] == ',') {
                ++pos_;
                continue;
            }
            if (t_[pos_] == ']') {
                ++pos_;
                return out;
            }
            fail("expected ',' or ']' in array");
        }
    }

    Value number() {
        size_t end = pos_;
        while (end < t_.size() && std::string_view("+-0123456789.eE_").find(t_[end]) != std::string_view::npos) ++end;
        std::string tok(t_.substr(pos_, end - pos_));
        tok.erase(std::remove(tok.begin(), tok.end(), '_'), tok.end());
        if (tok.empty()) fail("cannot parse value '" + std::string(t_.substr(pos_)) + "'");
        if (!tok.empty() && tok[0] == '+') tok.erase(0, 1);
        Value out;
        const bool is_real = tok.find_first_of(".eE") != std::string::npos;
        const char* b = tok.data();
        const char* e = tok.data() + tok.size();
        std::from_chars_result r;
        if (is_real) {
            out.kind = Value::Kind::real;
            r = std::from_chars(b, e, out.d);
        } else {
            out.kind = Value::Kind::integer;
            r = std::from_chars(b, e, out.i);
        }
        if (r.ec != std::errc() || r.ptr != e) fail("cannot parse number '" + tok + "'");
        pos_ = end;
        return out;
    }

    std::string_view t_;
    std::string where_;
    size_t pos_ = 0;
};

struct Ctx {
    std::string where;
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where + ": " + msg); }

    int64_t as_int(const Value& v) const {
        if (v.kind != Value::Kind::integer) fail("expected an integer");
        return v.i;
    }
    int as_i32(const Value& v) const {
        const int64_t x = as_int(v);
        if (x < INT32_MIN || x > INT32_MAX) fail("integer out of range");
        return static_cast<int>(x);
    }
    uint64_t as_u64(const Value& v) const {
        const int64_t x = as_int(v);
        if (x < 0) fail("expected a non-negative integer");
        return static_cast<uint64_t>(x);
    }
    double as_real(const Value& v) const {
        if (v.kind == Value::Kind::integer) return static_cast<double>(v.i);
        if (v.kind != Value::Kind::real) fail("expected a number");
        return v.d;
    }
    bool as_bool(const Value& v) const {
        if (v.kind != Value::Kind::boolean) fail("expected true or false");
        return v.b;
    }
    const std::string& as_str(const Value& v) const {
        if (v.kind != Value::Kind::string) fail("expected a quoted string");
        return v.s;
    }
    const std::vector<Value>& as_array(const Value& v) const {
        if (v.kind != Value::Kind::array) fail("expected an array");
        return v.items;
    }
};

int parse_layer(const Ctx& ctx, const Value& v) {
    if (v.kind == Value::Kind::integer) return static_cast<int>(v.i);
    const std::string& s = ctx.as_str(v);
    if (s.size() == 2 && (s[0] == 'L' || s[0] == 'l') && s[1] >= '0' && s[1] <= '9') return s[1] - '0';
    ctx.fail("adain layer must be \"L1\", \"L2\" or \"L3\", got \"" + s + "\"");
}

BlockKind parse_block(const Ctx& ctx, const Value& v) {
    const std::string& s = ctx.as_str(v);
    if (s == "light") return BlockKind::light;
    if (s == "original") return BlockKind::original;
    ctx.fail("block kind must be \"light\" or \"original\", got \"" + s + "\"");
}

SleVariant parse_sle(const Ctx& ctx, const Value& v) {
    const std::string& s = ctx.as_str(v);
    if (s == "deep") return SleVariant::deep;
    if (s == "lite") return SleVariant::lite;
    if (s == "none") return SleVariant::none;
    ctx.fail("sle_variant must be \"deep\", \"lite\" or \"none\", got \"" + s + "\"");
}

RootKind parse_root(const Ctx& ctx, const Value& v) {
    const std::string& s = ctx.as_str(v);
    if (s == "const") return RootKind::constant;
    if (s == "noise-projected") return RootKind::noise_projected;
    ctx.fail("root must be \"const\" or \"noise-projected\", got \"" + s + "\"");
}

using Handler = std::function<void(const Ctx&, const Value&, RunConfig&)>;

const std::map<std::string, std::map<std::string, Handler>>& handlers() {
    static const std::map<std::string, std::map<std::string, Handler>> table = {
        {"generator",
         {
             {"z_dim", [](const Ctx& c, const Value& v, RunConfig& r) { r.generator.z_dim = c.as_i32(v); }},
             {"w_dim", [](const Ctx& c, const Value& v, RunConfig& r) { r.generator.w_dim = c.as_i32(v); }},
             {"mapping_depth",
              [](const Ctx& c, const Value& v, RunConfig& r) { r.generator.mapping_depth = c.as_i32(v); }},
             {"out_res", [](const Ctx& c, const Value& v, RunConfig& r) { r.generator.out_res = c.as_i32(v); }},
             {"base_channels",
              [](const Ctx& c, const Value& v, RunConfig& r) { r.generator.base_channels = c.as_i32(v); }},
             {"adain_layers",
              [](const Ctx& c, const Value& v, RunConfig& r) {
                  r.generator.adain_layers.clear();
                  for (const auto& it : c.as_array(v)) r.generator.adain_layers.push_back(parse_layer(c, it));
              }},
             {"fg_blocks",
              [](const Ctx& c, const Value& v, RunConfig& r) {
                  r.generator.fg_blocks.clear();
                  for (const auto& it : c.as_array(v)) r.generator.fg_blocks.push_back(parse_block(c, it));
              }},
             {"sle_variant",
              [](const Ctx& c, const Value& v, RunConfig& r) { r.generator.sle_variant = parse_sle(c, v); }},
             {"sle_pairs",
              [](const Ctx& c, const Value& v, RunConfig& r) {
                  r.generator.sle_pairs.clear();
                  for (const auto& it : c.as_array(v)) {
                      const auto& pair = c.as_array(it);
                      if (pair.size() != 2) c.fail("each sle pair must be [low_res, high_res]");
                      r.generator.sle_pairs.push_back({c.as_i32(pair[0]), c.as_i32(pair[1])});
                  }
              }},
             {"adain_with_sle",
              [](const Ctx& c, const Value& v, RunConfig& r) { r.generator.adain_with_sle = c.as_bool(v); }},
             {"root", [](const Ctx& c, const Value& v, RunConfig& r) { r.generator.root = parse_root(c, v); }},
         }},
        {"training",
         {
             {"batch_size", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.batch_size = c.as_i32(v); }},
             {"total_kimg", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.total_kimg = c.as_real(v); }},
             {"lr_g", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.lr_g = c.as_real(v); }},
             {"lr_d", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.lr_d = c.as_real(v); }},
             {"beta1", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.beta1 = c.as_real(v); }},
             {"beta2", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.beta2 = c.as_real(v); }},
             {"adam_eps", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.adam_eps = c.as_real(v); }},
             {"seed", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.seed = c.as_u64(v); }},
             {"projection_seed",
              [](const Ctx& c, const Value& v, RunConfig& r) { r.training.projection_seed = c.as_u64(v); }},
             {"ema", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.ema = c.as_bool(v); }},
             {"ema_beta", [](const Ctx& c, const Value& v, RunConfig& r) { r.training.ema_beta = c.as_real(v); }},
         }},
        {"eval",
         {
             {"every_kimg", [](const Ctx& c, const Value& v, RunConfig& r) { r.eval.every_kimg = c.as_real(v); }},
             {"extractor_seed",
              [](const Ctx& c, const Value& v, RunConfig& r) { r.eval.extractor_seed = c.as_u64(v); }},
             {"n_real", [](const Ctx& c, const Value& v, RunConfig& r) { r.eval.n_real = c.as_i32(v); }},
             {"n_fake", [](const Ctx& c, const Value& v, RunConfig& r) { r.eval.n_fake = c.as_i32(v); }},
             {"kid_block_size",
              [](const Ctx& c, const Value& v, RunConfig& r) { r.eval.kid_block_size = c.as_i32(v); }},
             {"pr_k", [](const Ctx& c, const Value& v, RunConfig& r) { r.eval.pr_k = c.as_i32(v); }},
         }},
        {"data",
         {
             {"source", [](const Ctx& c, const Value& v, RunConfig& r) { r.data.source = c.as_str(v); }},
             {"kind", [](const Ctx& c, const Value& v, RunConfig& r) { r.data.kind = c.as_str(v); }},
             {"n", [](const Ctx& c, const Value& v, RunConfig& r) { r.data.n = c.as_i32(v); }},
             {"path", [](const Ctx& c, const Value& v, RunConfig& r) { r.data.path = c.as_str(v); }},
             {"seed", [](const Ctx& c, const Value& v, RunConfig& r) { r.data.seed = c.as_u64(v); }},
         }},
    };
    return table;
}

std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_real(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

}  // namespace

std::vector<std::string> required_keys(ConfigScope scope) {
    std::vector<std::string> keys = {"generator.out_res", "generator.base_channels", "generator.mapping_depth",
                                     "generator.adain_layers", "generator.sle_variant"};
    if (scope == ConfigScope::run) {
        for (const char* k : {"training.batch_size", "training.total_kimg", "training.seed", "data.source"})
            keys.emplace_back(k);
    }
    return keys;
}

RunConfig parse_run_config(const std::string& text, const std::string& source_name, ConfigScope scope) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string where = source_name + ":" + std::to_string(lineno);
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (!handlers().count(section))
                throw ConfigError(where + ": unknown section [" + section +
                                  "]; expected [generator], [training], [eval] or [data]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any section");
        const auto& table = handlers().at(section);
        auto it = table.find(key);
        if (it == table.end()) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
        const std::string full = section + "." + key;
        if (!seen.insert(full).second) throw ConfigError(where + ": duplicate key '" + key + "' in [" + section + "]");
        LineParser p(std::string_view(line).substr(eq + 1), where + ": " + full);
        Value v = p.value();
        p.expect_end();
        it->second(Ctx{where + ": " + full}, v, cfg);
    }

    std::vector<std::string> missing;
    for (const auto& k : required_keys(scope))
        if (!seen.count(k)) missing.push_back(k);
    if (!missing.empty()) {
        std::string msg = source_name + ": missing required keys:";
        for (const auto& k : missing) msg += " " + k;
        throw ConfigError(msg);
    }
    cfg.generator = resolve(cfg.generator);
    validate(cfg.generator);
    if (scope == ConfigScope::run) validate(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path, ConfigScope scope) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str(), path, scope);
}

void validate(const RunConfig& c) {
    std::vector<std::string> v;
    const auto& t = c.training;
    if (t.batch_size < 2) v.push_back("training.batch_size must be >= 2 (batch norm needs two samples)");
    if (!(t.total_kimg > 0)) v.push_back("training.total_kimg must be positive");
    if (!(t.lr_g > 0) || !(t.lr_d > 0)) v.push_back("training learning rates must be positive");
    if (t.beta1 < 0 || t.beta1 >= 1 || t.beta2 < 0 || t.beta2 >= 1) v.push_back("training betas must lie in [0, 1)");
    if (!(t.adam_eps > 0)) v.push_back("training.adam_eps must be positive");
    if (t.ema_beta < 0 || t.ema_beta >= 1) v.push_back("training.ema_beta must lie in [0, 1)");
    const auto& e = c.eval;
    if (!(e.every_kimg > 0)) v.push_back("eval.every_kimg must be positive");
    if (e.n_real < 2 || e.n_fake < 2) v.push_back("eval.n_real and eval.n_fake must be >= 2");
    if (e.kid_block_size < 0 || e.kid_block_size == 1) v.push_back("eval.kid_block_size must be 0 or >= 2");
    if (e.pr_k < 1) v.push_back("eval.pr_k must be >= 1");
    const auto& d = c.data;
    if (d.source == "synthetic") {
        if (d.kind != "two_mode_blobs" && d.kind != "checkerboard" && d.kind != "gaussian_rings")
            v.push_back("data.kind must be two_mode_blobs, checkerboard or gaussian_rings, got '" + d.kind + "'");
        if (d.n < t.batch_size) v.push_back("data.n must be at least training.batch_size");
    } else if (d.source == "folder") {
        if (d.path.empty()) v.push_back("data.path is required when data.source = \"folder\"");
    } else {
        v.push_back("data.source must be \"synthetic\" or \"folder\", got '" + d.source + "'");
    }
    if (!v.empty()) {
        std::string msg = "invalid run config:";
        for (const auto& s : v) msg += " " + s + ";";
        msg.pop_back();
        throw ConfigError(msg);
    }
}

std::string serialize_run_config(const RunConfig& config) {
    const GeneratorConfig g = resolve(config.generator);
    std::ostringstream o;
    o << "[generator]\n";
    o << "z_dim = " << g.z_dim << "\n";
    o << "w_dim = " << g.w_dim << "\n";
    o << "mapping_depth = " << g.mapping_depth << "\n";
    o << "out_res = " << g.out_res << "\n";
    o << "base_channels = " << g.base_channels << "\n";
    o << "adain_layers = [";
    for (size_t i = 0; i < g.adain_layers.size(); ++i) o << (i ? ", " : "") << "\"L" << g.adain_layers[i] << "\"";
    o << "]\n";
    o << "fg_blocks = [";
    for (size_t i = 0; i < g.fg_blocks.size(); ++i) o << (i ? ", " : "") << "\"" << to_string(g.fg_blocks[i]) << "\"";
    o << "]\n";
    o << "sle_variant = \"" << to_string(g.sle_variant) << "\"\n";
    o << "sle_pairs = [";
    for (size_t i = 0; i < g.sle_pairs.size(); ++i)
        o << (i ? ", " : "") << "[" << g.sle_pairs[i].low_res << ", " << g.sle_pairs[i].high_res << "]";
    o << "]\n";
    o << "adain_with_sle = " << (g.adain_with_sle ? "true" : "false") << "\n";
    o << "root = \"" << to_string(g.root) << "\"\n";

    const auto& t = config.training;
    o << "\n[training]\n";
    o << "batch_size = " << t.batch_size << "\n";
    o << "total_kimg = " << fmt_real(t.total_kimg) << "\n";
    o << "lr_g = " << fmt_real(t.lr_g) << "\n";
    o << "lr_d = " << fmt_real(t.lr_d) << "\n";
    o << "beta1 = " << fmt_real(t.beta1) << "\n";
    o << "beta2 = " << fmt_real(t.beta2) << "\n";
    o << "adam_eps = " << fmt_real(t.adam_eps) << "\n";
    o << "seed = " << t.seed << "\n";
    o << "projection_seed = " << t.projection_seed << "\n";
    o << "ema = " << (t.ema ? "true" : "false") << "\n";
    o << "ema_beta = " << fmt_real(t.ema_beta) << "\n";

    const auto& e = config.eval;
    o << "\n[eval]\n";
    o << "every_kimg = " << fmt_real(e.every_kimg) << "\n";
    o << "extractor_seed = " << e.extractor_seed << "\n";
    o << "n_real = " << e.n_real << "\n";
    o << "n_fake = " << e.n_fake << "\n";
    o << "kid_block_size = " << e.kid_block_size << "\n";
    o << "pr_k = " << e.pr_k << "\n";

    const auto& d = config.data;
    o << "\n[data]\n";
    o << "source = \"" << d.source << "\"\n";
    o << "kind = \"" << d.kind << "\"\n";
    o << "n = " << d.n << "\n";
    o << "path = \"" << d.path << "\"\n";
    o << "seed = " << d.seed << "\n";
    return o.str();
}

uint64_t config_digest(const std::string& canonical_text) { return fnv1a(canonical_text); }

}  // namespace spgan
