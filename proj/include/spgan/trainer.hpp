#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spgan/checkpoint.hpp"
#include "spgan/config.hpp"
#include "spgan/data.hpp"
#include "spgan/discriminator.hpp"
#include "spgan/generator.hpp"
#include "spgan/metrics.hpp"
#include "spgan/optim.hpp"

namespace spgan {

struct StepLosses {
    double loss_d = 0.0;
    double loss_g = 0.0;
};

// Generator, projection, heads and both optimizers for one run. Every random draw of step s
// comes from streams derived from (training.seed, s).
class Trainer {
   public:
    explicit Trainer(const RunConfig& config);
    // Rebuilds the run from the embedded config and restores every array.
    static std::unique_ptr<Trainer> from_checkpoint(const Checkpoint& ckpt);

    // One discriminator update on loss_d, then one generator update on loss_g, each on a
    // fresh latent batch. Throws NumericError on a non-finite loss.
    StepLosses train_step(const Tensor& real);

    int64_t step() const { return step_; }
    const RunConfig& config() const { return config_; }
    const std::string& config_text() const { return config_text_; }
    Generator& generator() { return *gen_; }
    // The EMA copy when enabled, otherwise the trained generator.
    Generator& eval_generator();
    const ProjectionNet& projection() const { return proj_; }
    DiscriminatorHeads& heads() { return heads_; }
    const AdamState& adam_g() const { return adam_g_; }
    const AdamState& adam_d() const { return adam_d_; }
    std::optional<StepLosses> last_losses() const { return last_; }

    Checkpoint to_checkpoint() const;

   private:
    RunConfig config_;
    std::string config_text_;
    std::unique_ptr<Generator> gen_;
    std::unique_ptr<Generator> ema_;
    ProjectionNet proj_;
    DiscriminatorHeads heads_;
    AdamState adam_g_, adam_d_;
    int64_t step_ = 0;
    std::optional<StepLosses> last_;
};

Tensor sample_latents(int64_t n, int z_dim, Rng& rng);

// Generates n images in eval mode (running batch-norm statistics) from seeded latents.
Tensor generate_images(Generator& g, int64_t n, uint64_t seed, bool noise);

// Builds the generator stored in a checkpoint (EMA weights when present and requested).
std::unique_ptr<Generator> generator_from_checkpoint(const Checkpoint& ckpt, bool prefer_ema = true);

struct MetricsRow {
    double kimg = 0.0;
    MetricsReport report;
    std::optional<StepLosses> losses;
};

inline constexpr const char* kMetricsHeader = "kimg,fid,kid,precision,recall,loss_d,loss_g,extractor_id";
std::string format_metrics_row(const MetricsRow& row);
// Appends one row, writing the header first when the file is new or empty.
void append_metrics_row(const std::string& path, const MetricsRow& row);

struct TrainLoopOptions {
    std::string out_dir;
    std::string resume_from;    // checkpoint path, empty for a fresh run
    int64_t max_steps = -1;     // stop early after this many total steps (for interrupted-run tests)
    bool verbose = false;
};

struct TrainResult {
    int64_t steps = 0;          // total steps reached
    int64_t total_steps = 0;    // planned by total_kimg
    std::vector<StepLosses> trace;  // losses of steps run by this call
    std::vector<MetricsRow> metrics;
    std::string final_checkpoint;
    uint64_t projection_checksum_start = 0;  // before the first step of this call
    uint64_t projection_checksum_end = 0;    // after the last
};

int64_t total_steps(const TrainConfig& t);
// True when an eval row is due after `steps_done` steps.
bool is_eval_point(int64_t steps_done, const RunConfig& c);

// Run directory: config.toml, metrics.csv, losses.csv, checkpoints/, samples/.
TrainResult train_loop(const RunConfig& config, const TrainLoopOptions& options);

// Real-image reference features for evaluation: a seeded subset of the dataset.
FeatureMatrix real_features(const ImageSet& images, const FeatureExtractor& ex, int n, uint64_t seed);
MetricsReport evaluate_generator(Generator& g, const FeatureMatrix& real, const FeatureExtractor& ex,
                                 const EvalConfig& e, uint64_t seed, bool noise = true);

}  // namespace spgan
