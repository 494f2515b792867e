// spgan: train, sample, evaluate and inspect generators.
//
// Exit codes: 0 success, 1 failed check or numeric failure, 2 bad input (config, paths, flags).

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "spgan/gradcheck.hpp"
#include "spgan/kernels.hpp"
#include "spgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace spgan;

namespace {

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed, std::string out,
              const std::string& resume, int64_t max_steps, bool quiet) {
    RunConfig cfg = load_run_config(config_path);
    if (seed) cfg.training.seed = *seed;
    if (out.empty()) out = (fs::path("runs") / fs::path(config_path).stem()).string();
    TrainLoopOptions opt;
    opt.out_dir = out;
    opt.resume_from = resume;
    opt.max_steps = max_steps;
    opt.verbose = !quiet;
    const TrainResult r = train_loop(cfg, opt);
    std::printf("trained %" PRId64 "/%" PRId64 " steps; run directory %s; checkpoint %s\n", r.steps, r.total_steps,
                out.c_str(), r.final_checkpoint.c_str());
    if (!r.metrics.empty()) std::printf("last row: %s\n", format_metrics_row(r.metrics.back()).c_str());
    return 0;
}

int cmd_sample(const std::string& ckpt_path, int n, uint64_t seed, const std::string& out, bool noise, int cols) {
    if (n < 1) throw UsageError("--n must be >= 1");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto g = generator_from_checkpoint(ckpt);
    write_png(out, make_grid(generate_images(*g, n, seed, noise), cols));
    std::printf("wrote %d samples to %s\n", n, out.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path, int n_fake, uint64_t seed,
             std::string out, bool noise, bool real_vs_real, const std::string& export_features) {
    if (n_fake < 64) throw UsageError("--n-fake must be >= 64, got " + std::to_string(n_fake));
    RunConfig cfg;
    std::optional<Checkpoint> ckpt;
    if (!ckpt_path.empty()) {
        ckpt = load_checkpoint(ckpt_path);
        cfg = parse_run_config(ckpt->config_text, ckpt_path);
    } else if (!config_path.empty()) {
        cfg = load_run_config(config_path);
    } else {
        throw UsageError("eval needs --checkpoint or --config");
    }
    if (!real_vs_real && !ckpt) throw UsageError("eval needs --checkpoint unless --real-vs-real is given");
    if (!config_path.empty() && ckpt) cfg.data = load_run_config(config_path).data;

    const ImageSet images = load_images(cfg.data, cfg.generator.out_res);
    const FeatureExtractor ex(cfg.eval.extractor_seed);
    const FeatureMatrix real = real_features(images, ex, cfg.eval.n_real, cfg.data.seed);
    FeatureMatrix fake;
    MetricsRow row;
    if (real_vs_real) {
        fake = real;
    } else {
        auto g = generator_from_checkpoint(*ckpt);
        fake = ex.extract(generate_images(*g, n_fake, seed, noise));
        row.kimg = static_cast<double>(ckpt->step * static_cast<uint64_t>(cfg.training.batch_size)) / 1000.0;
        if (const Tensor* ld = ckpt->find("meta/loss_d"))
            row.losses = StepLosses{ld->item(), ckpt->at("meta/loss_g").item()};
    }
    row.report = evaluate(real, fake, cfg.eval.kid_block_size, cfg.eval.pr_k);
    if (!export_features.empty()) {
        save_features(export_features + ".real.feat", real);
        save_features(export_features + ".fake.feat", fake);
    }
    if (out.empty()) {
        const fs::path p = ckpt_path.empty() ? fs::path() : fs::path(ckpt_path).parent_path();
        out = (p.filename() == "checkpoints" ? p.parent_path() / "metrics.csv" : fs::path("metrics.csv")).string();
    }
    append_metrics_row(out, row);
    const auto& r = row.report;
    std::printf("fid        %.6f\nkid        %.6f\nprecision  %.4f\nrecall     %.4f\nn_real     %" PRId64
                "\nn_fake     %" PRId64 "\nextractor  %s\nappended to %s\n",
                r.fid, r.kid, r.precision, r.recall, r.n_real, r.n_fake, r.extractor_id.c_str(), out.c_str());
    return 0;
}

void print_counts(const char* title, const ParamCount& c) {
    std::printf("%s\n", title);
    for (const auto& [name, n] : c.per_submodule) std::printf("  %-16s %12" PRId64 "\n", name.c_str(), n);
    std::printf("  %-16s %12" PRId64 "\n", "total", c.total);
}

int cmd_params(const std::string& config_path, const std::string& compare) {
    const RunConfig cfg = load_run_config(config_path, ConfigScope::generator);
    const ParamCount counts = count_params(cfg.generator);
    print_counts("trainable parameters", counts);
    if (compare.empty()) return 0;
    if (compare != "original") throw UsageError("--compare accepts only 'original', got '" + compare + "'");
    const ParamCount base = count_params(original_baseline(cfg.generator));
    print_counts("all-original baseline (no AdaIN, no mapping network)", base);
    std::printf("ratio %.6f\n", static_cast<double>(counts.total) / static_cast<double>(base.total));
    return 0;
}

int cmd_gradcheck(const std::string& scope, double tol, int trials, uint64_t seed) {
    const auto results = run_gradcheck(scope, tol, trials, seed);
    std::printf("%-20s %7s %14s  %s\n", "op", "trials", "max_rel_err", "result");
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-20s %7d %14.3e  %s\n", r.op.c_str(), r.trials, r.max_rel_error, r.passed ? "pass" : "FAIL");
        ok = ok && r.passed;
    }
    std::printf("tolerance %.1e: %s\n", tol, ok ? "all pass" : "FAILED");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SPGAN generators: training, sampling, evaluation, parameter counts and gradient checks"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads for kernels (0 keeps the runtime default)");

    std::string config, out, resume, checkpoint, compare, export_features, scope = "all";
    std::optional<uint64_t> seed;
    uint64_t sample_seed = 0;
    int64_t max_steps = -1;
    bool quiet = false, noise = true, real_vs_real = false;
    int n = 16, cols = 0, n_fake = 256, trials = 20;
    double tol = 1e-3;

    auto* train = app.add_subcommand("train", "train a generator from a run config");
    train->add_option("--config,config", config, "run config file")->required();
    train->add_option("--seed", seed, "override training.seed");
    train->add_option("--out", out, "run directory (default runs/<config name>)");
    train->add_option("--resume", resume, "continue from a checkpoint written by an earlier run");
    train->add_option("--max-steps", max_steps, "stop after this many total steps");
    train->add_flag("--quiet", quiet, "no progress lines");

    auto* sample = app.add_subcommand("sample", "write a PNG grid of generated images");
    sample->add_option("--checkpoint,checkpoint", checkpoint, "checkpoint file")->required();
    sample->add_option("--n", n, "number of images (grid is ceil(sqrt n) wide)");
    sample->add_option("--cols", cols, "grid columns override");
    sample->add_option("--seed", sample_seed, "latent seed");
    sample->add_option("--out", out, "output PNG")->required();
    sample->add_option("--noise-at-sample", noise, "inject noise while sampling (true/false)");

    auto* eval = app.add_subcommand("eval", "FID, KID, precision and recall against the run's dataset");
    eval->add_option("--checkpoint,checkpoint", checkpoint, "checkpoint file");
    eval->add_option("--config", config, "run config; its [data] section overrides the checkpoint's");
    eval->add_option("--n-fake", n_fake, "generated samples (>= 64)");
    eval->add_option("--seed", sample_seed, "latent seed");
    eval->add_option("--out", out, "metrics CSV to append to (default: the run's metrics.csv)");
    eval->add_option("--noise-at-sample", noise, "inject noise while sampling (true/false)");
    eval->add_flag("--real-vs-real", real_vs_real, "compare the real features with themselves");
    eval->add_option("--export-features", export_features, "also write <prefix>.real.feat and <prefix>.fake.feat");

    auto* params = app.add_subcommand("params", "per-submodule trainable parameter counts");
    params->add_option("--config,config", config, "config file (only [generator] is required)")->required();
    params->add_option("--compare", compare, "'original': ratio against the all-original-block baseline");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
    grad->add_option("scope", scope, "all or one op name");
    grad->add_option("--tol", tol, "maximum relative error");
    grad->add_option("--trials", trials, "random trials per op");
    grad->add_option("--seed", sample_seed, "trial seed (default 1234)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (threads > 0) kernels::set_num_threads(threads);
    try {
        if (*train) return cmd_train(config, seed, out, resume, max_steps, quiet);
        if (*sample) return cmd_sample(checkpoint, n, sample_seed, out, noise, cols);
        if (*eval) return cmd_eval(checkpoint, config, n_fake, sample_seed, out, noise, real_vs_real, export_features);
        if (*params) return cmd_params(config, compare);
        if (*grad) return cmd_gradcheck(scope, tol, trials, grad->count("--seed") ? sample_seed : 1234);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 1;
    }
    return 0;
}
