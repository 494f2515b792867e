#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spgan/generator.hpp"

namespace spgan {

struct TrainConfig {
    int batch_size = 8;
    double total_kimg = 20.0;
    double lr_g = 2e-4;
    double lr_d = 2e-4;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    uint64_t projection_seed = 0;
    bool ema = false;
    double ema_beta = 0.999;
};

struct EvalConfig {
    double every_kimg = 5.0;
    uint64_t extractor_seed = 7;
    int n_real = 256;
    int n_fake = 256;
    int kid_block_size = 0;  // 0 selects min(N, 256)
    int pr_k = 3;
};

struct DataConfig {
    std::string source = "synthetic";  // synthetic | folder
    std::string kind = "two_mode_blobs";
    int n = 512;
    std::string path;
    uint64_t seed = 0;
};

struct RunConfig {
    GeneratorConfig generator;
    TrainConfig training;
    EvalConfig eval;
    DataConfig data;
};

enum class ConfigScope {
    generator,  // only [generator] keys are required (params, gradient tooling)
    run,        // training, eval and data are needed too
};

// Sectioned `key = value` text: integers, floats, booleans, "strings" and [arrays].
// `#` starts a comment. Unknown sections or keys, duplicate keys and type errors throw
// ConfigError naming the source and line; missing required keys are listed together.
RunConfig parse_run_config(const std::string& text, const std::string& source_name,
                           ConfigScope scope = ConfigScope::run);
RunConfig load_run_config(const std::string& path, ConfigScope scope = ConfigScope::run);

// Every field, fixed order, resolved generator defaults. parse(serialize(c)) == c.
std::string serialize_run_config(const RunConfig& config);
uint64_t config_digest(const std::string& canonical_text);

std::vector<std::string> required_keys(ConfigScope scope);

// Throws ConfigError for values that cannot run (non-positive batch, unknown dataset kind...).
void validate(const RunConfig& config);

}  // namespace spgan
