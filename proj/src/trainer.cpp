#include "spgan/trainer.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace spgan {

namespace fs = std::filesystem;

namespace {

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
    if (dst.shape() != src.shape())
        throw IoError("checkpoint array '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                      shape_str(dst.shape()));
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
}

void store_moments(Checkpoint& c, const std::string& prefix, const ParamStore& params, const AdamState& st) {
    size_t i = 0;
    for (const auto& [name, t] : params.entries()) {
        Tensor m(t.shape()), v(t.shape());
        if (!st.m.empty()) {
            std::copy(st.m[i].begin(), st.m[i].end(), m.data().begin());
            std::copy(st.v[i].begin(), st.v[i].end(), v.data().begin());
        }
        c.arrays.emplace_back(prefix + ".m/" + name, m);
        c.arrays.emplace_back(prefix + ".v/" + name, v);
        ++i;
    }
}

void load_moments(const Checkpoint& c, const std::string& prefix, const ParamStore& params, AdamState& st) {
    st.m.clear();
    st.v.clear();
    for (const auto& [name, t] : params.entries()) {
        const Tensor& m = c.at(prefix + ".m/" + name);
        const Tensor& v = c.at(prefix + ".v/" + name);
        if (m.shape() != t.shape() || v.shape() != t.shape())
            throw IoError("checkpoint moments for '" + name + "' do not match the parameter shape");
        st.m.emplace_back(m.data().begin(), m.data().end());
        st.v.emplace_back(v.data().begin(), v.data().end());
    }
    st.step = static_cast<int64_t>(c.step);
}

void check_finite_loss(double v, const char* which, int64_t step, const StepLosses& partial) {
    if (std::isfinite(v)) return;
    char buf[200];
    std::snprintf(buf, sizeof buf, "non-finite %s at step %" PRId64 " (loss_d=%g, loss_g=%g)", which, step,
                  partial.loss_d, partial.loss_g);
    throw NumericError(buf);
}

}  // namespace

Tensor sample_latents(int64_t n, int z_dim, Rng& rng) {
    Tensor z(Shape{n, z_dim});
    for (auto& v : z.data()) v = static_cast<float>(rng.normal());
    return z;
}

Trainer::Trainer(const RunConfig& config)
    : config_([&] {
          RunConfig c = config;
          c.generator = resolve(c.generator);
          validate(c.generator);
          validate(c);
          return c;
      }()),
      config_text_(serialize_run_config(config_)),
      proj_(config_.generator.out_res, config_.training.projection_seed),
      heads_(config_.generator.out_res, derive_seed(config_.training.seed, "discriminator")) {
    const auto& t = config_.training;
    gen_ = std::make_unique<Generator>(config_.generator, derive_seed(t.seed, "generator"));
    if (t.ema) {
        ema_ = std::make_unique<Generator>(config_.generator, derive_seed(t.seed, "generator"));
        ema_->params().set_requires_grad(false);
    }
    adam_g_.config = AdamConfig{t.lr_g, t.beta1, t.beta2, t.adam_eps};
    adam_d_.config = AdamConfig{t.lr_d, t.beta1, t.beta2, t.adam_eps};
}

Generator& Trainer::eval_generator() {
    if (!ema_) return *gen_;
    auto& src = gen_->buffers().entries();
    auto& dst = ema_->buffers().entries();
    for (size_t i = 0; i < src.size(); ++i) copy_into(dst[i].second, src[i].second, src[i].first);
    return *ema_;
}

StepLosses Trainer::train_step(const Tensor& real) {
    const int res = config_.generator.out_res;
    if (real.ndim() != 4 || real.dim(1) != 3 || real.dim(2) != res || real.dim(3) != res || real.dim(0) < 2)
        throw ConfigError("train_step: real batch must be [N>=2,3," + std::to_string(res) + "," +
                          std::to_string(res) + "], got " + shape_str(real.shape()));
    const int64_t n = real.dim(0);
    const uint64_t seed = config_.training.seed, s = static_cast<uint64_t>(step_);
    const ForwardOptions train_mode{};
    StepLosses out;

    // Discriminator update on a fresh latent batch.
    Tensor fake;
    {
        Tape::Pause pause;
        Rng zr(derive_seed(seed, "z.d", s)), nr(derive_seed(seed, "noise.d", s));
        fake = gen_->generate(sample_latents(n, config_.generator.z_dim, zr), nr, train_mode);
    }
    heads_.params().zero_grad();
    {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor ld = loss_d(heads_.discriminate(proj_.project(real)), heads_.discriminate(proj_.project(fake)));
        out.loss_d = ld.item();
        check_finite_loss(out.loss_d, "loss_d", step_, out);
        backward(ld);
    }
    auto dparams = tensors_of(heads_.params());
    adam_step(dparams, adam_d_);

    // Generator update; head weights are frozen so no head gradients are accumulated.
    gen_->params().zero_grad();
    heads_.params().set_requires_grad(false);
    try {
        Tape tape;
        Tape::Scope scope(tape);
        Rng zr(derive_seed(seed, "z.g", s)), nr(derive_seed(seed, "noise.g", s));
        Tensor g_out = gen_->generate(sample_latents(n, config_.generator.z_dim, zr), nr, train_mode);
        Tensor lg = loss_g(heads_.discriminate(proj_.project(g_out)));
        out.loss_g = lg.item();
        check_finite_loss(out.loss_g, "loss_g", step_, out);
        backward(lg);
    } catch (...) {
        heads_.params().set_requires_grad(true);
        throw;
    }
    heads_.params().set_requires_grad(true);
    auto gparams = tensors_of(gen_->params());
    adam_step(gparams, adam_g_);

    if (ema_) {
        const float beta = static_cast<float>(config_.training.ema_beta);
        auto& src = gen_->params().entries();
        auto& dst = ema_->params().entries();
        for (size_t i = 0; i < src.size(); ++i) {
            auto a = dst[i].second.data();
            const auto b = src[i].second.data();
            for (size_t k = 0; k < a.size(); ++k) a[k] = beta * a[k] + (1.0f - beta) * b[k];
        }
    }
    ++step_;
    last_ = out;
    return out;
}

Checkpoint Trainer::to_checkpoint() const {
    Checkpoint c;
    c.config_text = config_text_;
    c.config_digest = config_digest(config_text_);
    c.step = static_cast<uint64_t>(step_);
    c.projection_seed = proj_.seed();
    for (const auto& [name, t] : gen_->params().entries()) c.arrays.emplace_back("g/" + name, t.clone());
    for (const auto& [name, t] : gen_->buffers().entries()) c.arrays.emplace_back("gbuf/" + name, t.clone());
    for (const auto& [name, t] : heads_.params().entries()) c.arrays.emplace_back("d/" + name, t.clone());
    store_moments(c, "adam_g", gen_->params(), adam_g_);
    store_moments(c, "adam_d", heads_.params(), adam_d_);
    if (ema_)
        for (const auto& [name, t] : ema_->params().entries()) c.arrays.emplace_back("ema/" + name, t.clone());
    if (last_) {
        c.arrays.emplace_back("meta/loss_d", Tensor::scalar(static_cast<float>(last_->loss_d)));
        c.arrays.emplace_back("meta/loss_g", Tensor::scalar(static_cast<float>(last_->loss_g)));
    }
    return c;
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const Checkpoint& ckpt) {
    const RunConfig cfg = parse_run_config(ckpt.config_text, "checkpoint config");
    auto t = std::make_unique<Trainer>(cfg);
    if (t->config_text_ != ckpt.config_text) throw IoError("checkpoint config does not re-serialize identically");
    if (ckpt.projection_seed != t->proj_.seed())
        throw IoError("checkpoint projection seed does not match its config");
    for (auto& [name, p] : t->gen_->params().entries()) copy_into(p, ckpt.at("g/" + name), name);
    for (auto& [name, b] : t->gen_->buffers().entries()) copy_into(b, ckpt.at("gbuf/" + name), name);
    for (auto& [name, p] : t->heads_.params().entries()) copy_into(p, ckpt.at("d/" + name), name);
    load_moments(ckpt, "adam_g", t->gen_->params(), t->adam_g_);
    load_moments(ckpt, "adam_d", t->heads_.params(), t->adam_d_);
    if (t->ema_)
        for (auto& [name, p] : t->ema_->params().entries()) copy_into(p, ckpt.at("ema/" + name), name);
    t->step_ = static_cast<int64_t>(ckpt.step);
    if (const Tensor* ld = ckpt.find("meta/loss_d")) {
        t->last_ = StepLosses{ld->item(), ckpt.at("meta/loss_g").item()};
    }
    return t;
}

Tensor generate_images(Generator& g, int64_t n, uint64_t seed, bool noise) {
    Tape::Pause pause;
    const int64_t res = g.config().out_res;
    const int64_t per = 3 * res * res;
    Rng zr(derive_seed(seed, "sample.z")), nr(derive_seed(seed, "sample.noise"));
    Tensor out(Shape{n, 3, res, res});
    const ForwardOptions opt{false, noise, false};
    constexpr int64_t kChunk = 32;
    for (int64_t s = 0; s < n; s += kChunk) {
        const int64_t m = std::min(kChunk, n - s);
        Tensor img = g.generate(sample_latents(m, g.config().z_dim, zr), nr, opt);
        std::copy(img.data().begin(), img.data().end(), out.data().begin() + s * per);
    }
    return out;
}

std::unique_ptr<Generator> generator_from_checkpoint(const Checkpoint& ckpt, bool prefer_ema) {
    const RunConfig cfg = parse_run_config(ckpt.config_text, "checkpoint config");
    auto g = std::make_unique<Generator>(cfg.generator, derive_seed(cfg.training.seed, "generator"));
    const bool ema = prefer_ema && !g->params().entries().empty() &&
                     ckpt.find("ema/" + g->params().entries().front().first) != nullptr;
    const std::string prefix = ema ? "ema/" : "g/";
    for (auto& [name, p] : g->params().entries()) copy_into(p, ckpt.at(prefix + name), name);
    for (auto& [name, b] : g->buffers().entries()) copy_into(b, ckpt.at("gbuf/" + name), name);
    return g;
}

std::string format_metrics_row(const MetricsRow& row) {
    char buf[512];
    const auto& r = row.report;
    std::string losses = ",";
    if (row.losses) {
        char lb[64];
        std::snprintf(lb, sizeof lb, "%.9g,%.9g", row.losses->loss_d, row.losses->loss_g);
        losses = lb;
    }
    std::snprintf(buf, sizeof buf, "%.3f,%.9g,%.9g,%.9g,%.9g,%s,%s", row.kimg, r.fid, r.kid, r.precision, r.recall,
                  losses.c_str(), r.extractor_id.c_str());
    return buf;
}

void append_metrics_row(const std::string& path, const MetricsRow& row) {
    std::error_code ec;
    const bool fresh = !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
    std::ofstream f(path, std::ios::app);
    if (!f) throw IoError("cannot append to '" + path + "'");
    if (fresh) f << kMetricsHeader << "\n";
    f << format_metrics_row(row) << "\n";
    if (!f) throw IoError("write failed for '" + path + "'");
}

int64_t total_steps(const TrainConfig& t) {
    const double images = t.total_kimg * 1000.0;
    return static_cast<int64_t>(std::ceil(images / t.batch_size - 1e-9));
}

bool is_eval_point(int64_t steps_done, const RunConfig& c) {
    if (steps_done <= 0) return false;
    if (steps_done == total_steps(c.training)) return true;
    const int64_t interval = std::max<int64_t>(1, std::llround(c.eval.every_kimg * 1000.0));
    const int64_t b = c.training.batch_size;
    return (steps_done * b) / interval != ((steps_done - 1) * b) / interval;
}

FeatureMatrix real_features(const ImageSet& images, const FeatureExtractor& ex, int n, uint64_t seed) {
    std::vector<int64_t> order(static_cast<size_t>(images.count));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    Rng rng(derive_seed(seed, "eval.real"));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    order.resize(std::min<size_t>(order.size(), static_cast<size_t>(n)));
    return ex.extract(images.gather(order));
}

MetricsReport evaluate_generator(Generator& g, const FeatureMatrix& real, const FeatureExtractor& ex,
                                 const EvalConfig& e, uint64_t seed, bool noise) {
    const Tensor fake = generate_images(g, e.n_fake, derive_seed(seed, "eval"), noise);
    return evaluate(real, ex.extract(fake), e.kid_block_size, e.pr_k);
}

namespace {

std::string step_name(const char* prefix, int64_t step, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%06" PRId64 "%s", prefix, step, ext);
    return buf;
}

void make_dirs(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
}

}  // namespace

TrainResult train_loop(const RunConfig& config, const TrainLoopOptions& options) {
    if (options.out_dir.empty()) throw UsageError("train_loop: an output directory is required");
    const fs::path out(options.out_dir);
    make_dirs(out / "checkpoints");
    make_dirs(out / "samples");

    std::unique_ptr<Trainer> trainer;
    if (!options.resume_from.empty()) {
        trainer = Trainer::from_checkpoint(load_checkpoint(options.resume_from));
        RunConfig probe = config;
        probe.generator = resolve(probe.generator);
        if (serialize_run_config(probe) != trainer->config_text())
            throw ConfigError("resume: config differs from the one stored in '" + options.resume_from + "'");
    } else {
        trainer = std::make_unique<Trainer>(config);
    }
    const RunConfig& cfg = trainer->config();
    {
        std::ofstream f(out / "config.toml", std::ios::trunc);
        if (!f) throw IoError("cannot write '" + (out / "config.toml").string() + "'");
        f << trainer->config_text();
    }

    const std::string metrics_path = (out / "metrics.csv").string();
    const std::string losses_path = (out / "losses.csv").string();
    const bool fresh = options.resume_from.empty();
    if (fresh) {
        std::error_code ec;
        fs::remove(metrics_path, ec);
        fs::remove(losses_path, ec);
    }

    const ImageSet images = load_images(cfg.data, cfg.generator.out_res);
    const BatchStream stream(images, cfg.training.batch_size, derive_seed(cfg.training.seed, "data"));
    const FeatureExtractor extractor(cfg.eval.extractor_seed);
    const FeatureMatrix real = real_features(images, extractor, cfg.eval.n_real, cfg.data.seed);
    const uint64_t eval_seed = derive_seed(cfg.training.seed, "evaluation");

    TrainResult result;
    result.total_steps = total_steps(cfg.training);
    const int64_t stop = options.max_steps >= 0 ? std::min(options.max_steps, result.total_steps) : result.total_steps;

    auto emit = [&](int64_t steps_done) {
        Generator& g = trainer->eval_generator();
        MetricsRow row;
        row.kimg = static_cast<double>(steps_done * cfg.training.batch_size) / 1000.0;
        row.report = evaluate_generator(g, real, extractor, cfg.eval, eval_seed);
        row.losses = trainer->last_losses();
        append_metrics_row(metrics_path, row);
        result.metrics.push_back(row);
        write_png((out / "samples" / step_name("step_", steps_done, ".png")).string(),
                  make_grid(generate_images(g, 16, derive_seed(cfg.training.seed, "grid"), true)));
        if (options.verbose)
            std::fprintf(stderr, "step %" PRId64 "/%" PRId64 " kimg %.3f fid %.4f kid %.5f pr %.3f/%.3f\n", steps_done,
                         result.total_steps, row.kimg, row.report.fid, row.report.kid, row.report.precision,
                         row.report.recall);
    };
    auto checkpoint = [&](int64_t steps_done) {
        const Checkpoint c = trainer->to_checkpoint();
        save_checkpoint((out / "checkpoints" / step_name("step_", steps_done, ".ckpt")).string(), c);
        result.final_checkpoint = (out / "checkpoints" / "latest.ckpt").string();
        save_checkpoint(result.final_checkpoint, c);
    };

    result.projection_checksum_start = trainer->projection().checksum();
    if (fresh) emit(0);

    std::ofstream losses(losses_path, std::ios::app);
    if (!losses) throw IoError("cannot append to '" + losses_path + "'");
    for (int64_t s = trainer->step(); s < stop; ++s) {
        StepLosses l;
        try {
            l = trainer->train_step(stream.batch(s));
        } catch (const NumericError& e) {
            const std::string snap = (out / "checkpoints" / "diverged.ckpt").string();
            save_checkpoint(snap, trainer->to_checkpoint());
            throw NumericError(std::string(e.what()) + "; training state at the failure saved to " + snap);
        }
        char line[96];
        std::snprintf(line, sizeof line, "%" PRId64 ",%.9g,%.9g\n", s, l.loss_d, l.loss_g);
        losses << line;
        result.trace.push_back(l);
        const int64_t done = s + 1;
        if (is_eval_point(done, cfg)) {
            losses.flush();
            emit(done);
            checkpoint(done);
        }
    }
    losses.flush();
    result.steps = trainer->step();
    result.projection_checksum_end = trainer->projection().checksum();
    if (result.final_checkpoint.empty() || !is_eval_point(result.steps, cfg)) checkpoint(result.steps);
    return result;
}

}  // namespace spgan
