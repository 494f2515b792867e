#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "spgan/config.hpp"
#include "spgan/data.hpp"
#include "spgan/trainer.hpp"

using namespace spgan;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = SPGAN_SOURCE_DIR;
const std::string kCli = SPGAN_CLI_PATH;

const char* kMinimal = R"(
[generator]
out_res = 32
base_channels = 8
mapping_depth = 2
adain_layers = ["L1"]
sle_variant = "deep"

[training]
batch_size = 4
total_kimg = 0.5
seed = 1

[data]
source = "synthetic"
)";

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("spgan_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct CliResult {
    int code;
    std::string out;
};

CliResult cli(const std::string& args) {
    const fs::path log = fs::temp_directory_path() / "spgan_cli_last.log";
    const std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::string config_error(const std::string& text) {
    try {
        parse_run_config(text, "test.toml");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
}

}  // namespace

TEST(RunConfig, ParsesMinimalAndFillsDefaults) {
    const RunConfig c = parse_run_config(kMinimal, "min.toml");
    EXPECT_EQ(c.generator.out_res, 32);
    EXPECT_EQ(c.generator.adain_layers, std::vector<int>{1});
    EXPECT_EQ(c.generator.z_dim, 256);
    EXPECT_EQ(c.training.batch_size, 4);
    EXPECT_DOUBLE_EQ(c.training.total_kimg, 0.5);
    EXPECT_DOUBLE_EQ(c.training.lr_g, 2e-4);
    EXPECT_EQ(c.eval.pr_k, 3);
    EXPECT_EQ(c.data.kind, "two_mode_blobs");
}

TEST(RunConfig, ErrorsNameTheLine) {
    EXPECT_NE(config_error(std::string(kMinimal) + "[bogus]\n").find("test.toml:16: unknown section [bogus]"),
              std::string::npos);
    EXPECT_NE(config_error(std::string(kMinimal) + "colour = 3\n").find("test.toml:16: unknown key 'colour'"),
              std::string::npos);
    EXPECT_NE(config_error(std::string(kMinimal) + "source = \"folder\"\n").find("test.toml:16: duplicate key 'source'"),
              std::string::npos);
    const std::string type_err = config_error("[generator]\nout_res = \"big\"\n");
    EXPECT_NE(type_err.find("test.toml:2"), std::string::npos);
    EXPECT_NE(type_err.find("expected an integer"), std::string::npos);
    EXPECT_NE(config_error("[generator]\nadain_layers = [\"X1\"]\n").find("test.toml:2"), std::string::npos);
    EXPECT_NE(config_error("out_res = 3\n").find("before any section"), std::string::npos);
}

TEST(RunConfig, MissingKeysAreListedTogether) {
    const std::string e = config_error("");
    for (const auto& k : required_keys(ConfigScope::run)) EXPECT_NE(e.find(k), std::string::npos) << k;
    EXPECT_NO_THROW(parse_run_config("[generator]\nout_res = 32\nbase_channels = 8\nmapping_depth = 2\n"
                                     "adain_layers = []\nsle_variant = \"none\"\n",
                                     "g.toml", ConfigScope::generator));
}

TEST(RunConfig, SerializeRoundTrip) {
    RunConfig c = parse_run_config(kMinimal, "min.toml");
    c.generator = resolve(c.generator);
    c.training.lr_d = 1.0 / 3.0;
    const std::string text = serialize_run_config(c);
    const RunConfig back = parse_run_config(text, "canon.toml");
    EXPECT_EQ(serialize_run_config(back), text);
    EXPECT_EQ(back.training.lr_d, c.training.lr_d);
    EXPECT_EQ(config_digest(text), config_digest(serialize_run_config(back)));
    EXPECT_NE(config_digest(text), config_digest(text + " "));
}

TEST(RunConfig, ValidateRejectsUnrunnableValues) {
    RunConfig c = parse_run_config(kMinimal, "min.toml");
    c.training.batch_size = 1;
    EXPECT_THROW(validate(c), ConfigError);
    c = parse_run_config(kMinimal, "min.toml");
    c.data.kind = "spirals";
    EXPECT_THROW(validate(c), ConfigError);
    c = parse_run_config(kMinimal, "min.toml");
    c.data.source = "folder";
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(ShippedConfigs, EveryFileValidatesAndBuilds) {
    int count = 0;
    for (const auto& e : fs::directory_iterator(kSource / "configs")) {
        if (e.path().extension() != ".toml") continue;
        ++count;
        SCOPED_TRACE(e.path().filename().string());
        const std::string text = slurp(e.path());
        const bool params_only = text.find("[training]") == std::string::npos;
        const RunConfig c = load_run_config(e.path().string(), params_only ? ConfigScope::generator : ConfigScope::run);
        if (!params_only) EXPECT_NO_THROW(validate(c));
        const auto violations = config_violations(resolve(c.generator));
        EXPECT_TRUE(violations.empty());
        if (c.generator.out_res > 64) continue;  // shape checks for the 256 config run in the acceptance suite
        Generator g(c.generator, 1);
        Rng zr(1), nr(2);
        Tensor z({2, c.generator.z_dim});
        for (auto& v : z.data()) v = static_cast<float>(zr.normal());
        Tape::Pause pause;
        ForwardOptions opt;
        opt.training = false;
        EXPECT_EQ(g.generate(z, nr, opt).shape(), (Shape{2, 3, c.generator.out_res, c.generator.out_res}));
    }
    EXPECT_GE(count, 22);
}

TEST(Datasets, TwoModeBlobsAreBimodal) {
    const ImageSet s = synthetic_images("two_mode_blobs", 32, 512, 0);
    std::vector<double> means;
    const int64_t per = 3 * 32 * 32;
    for (int64_t i = 0; i < s.count; ++i) {
        double m = 0;
        for (int64_t k = 0; k < per; ++k) m += s.pixels[static_cast<size_t>(i * per + k)];
        means.push_back(m / static_cast<double>(per));
    }
    double mu = 0, total = 0;
    for (double m : means) mu += m;
    mu /= static_cast<double>(means.size());
    for (double m : means) total += (m - mu) * (m - mu);
    const oracle::TwoMeans km = oracle::two_means(means);
    // Two well-separated clusters: splitting explains almost all the variance.
    EXPECT_LT(km.within / total, 0.1);
    EXPECT_GT(km.hi - km.lo, 0.3);
    for (float v : s.pixels) {
        ASSERT_GE(v, -1.0f);
        ASSERT_LE(v, 1.0f);
    }
}

TEST(Datasets, OtherKindsAndDeterminism) {
    for (const char* kind : {"checkerboard", "gaussian_rings", "two_mode_blobs"}) {
        const ImageSet a = synthetic_images(kind, 16, 8, 5), b = synthetic_images(kind, 16, 8, 5);
        EXPECT_EQ(a.pixels, b.pixels) << kind;
        EXPECT_NE(a.pixels, synthetic_images(kind, 16, 8, 6).pixels) << kind;
    }
    EXPECT_THROW(synthetic_images("spirals", 16, 8, 0), ConfigError);
}

TEST(Datasets, FolderBatchesAndSkipsGarbage) {
    const fs::path dir = scratch("folder");
    for (int i = 0; i < 10; ++i) {
        RgbImage img{48, 40, std::vector<uint8_t>(48 * 40 * 3, static_cast<uint8_t>(20 * i))};
        write_png((dir / ("img" + std::to_string(i) + ".png")).string(), img);
    }
    write_file(dir / "broken.png", "not a png");
    write_file(dir / "notes.txt", "ignored");
    const ImageSet set = folder_images(dir.string(), 16);
    EXPECT_EQ(set.count, 10);
    EXPECT_EQ(set.skipped, 1);
    EXPECT_NEAR(set.pixels[0], -1.0f, 1e-6f);  // img0 is black
    const BatchStream a(set, 4, 7), b(set, 4, 7), c(set, 4, 8);
    EXPECT_EQ(a.batches_per_epoch(), 2);
    bool any_differs = false;
    for (int s = 0; s < 6; ++s) {
        EXPECT_EQ(a.batch_indices(s), b.batch_indices(s));
        any_differs = any_differs || a.batch_indices(s) != c.batch_indices(s);
    }
    EXPECT_TRUE(any_differs);
    // Within an epoch no index repeats.
    auto e0 = a.batch_indices(0), e1 = a.batch_indices(1);
    e0.insert(e0.end(), e1.begin(), e1.end());
    std::sort(e0.begin(), e0.end());
    EXPECT_EQ(std::adjacent_find(e0.begin(), e0.end()), e0.end());
    EXPECT_THROW(folder_images((dir / "missing").string(), 16), IoError);
    fs::remove_all(dir);
}

TEST(Datasets, PreprocessCropsAndResizes) {
    RgbImage img{4, 2, std::vector<uint8_t>(4 * 2 * 3, 0)};
    // Center 2x2 crop is columns 1..2; make them white.
    for (int y = 0; y < 2; ++y)
        for (int x = 1; x <= 2; ++x)
            for (int ch = 0; ch < 3; ++ch) img.pixels[(y * 4 + x) * 3 + ch] = 255;
    const auto px = preprocess(img, 4);
    ASSERT_EQ(px.size(), 3u * 16u);
    for (float v : px) EXPECT_NEAR(v, 1.0f, 1e-6f);
}

TEST(Grid, LayoutAndRoundTrip) {
    Tensor imgs({16, 3, 8, 8}, 1.0f);
    const RgbImage g = make_grid(imgs);
    EXPECT_EQ(g.width, 32);
    EXPECT_EQ(g.height, 32);
    for (uint8_t v : g.pixels) EXPECT_EQ(v, 255);
    const RgbImage r = make_grid(Tensor({5, 3, 8, 8}, -1.0f));
    EXPECT_EQ(r.width, 24);   // ceil(sqrt 5) = 3 columns
    EXPECT_EQ(r.height, 16);  // ceil(5 / 3) = 2 rows
    const RgbImage wide = make_grid(Tensor({5, 3, 8, 8}), 5);
    EXPECT_EQ(wide.width, 40);
    EXPECT_EQ(wide.height, 8);

    const fs::path dir = scratch("grid");
    write_png((dir / "g.png").string(), r);
    const RgbImage back = read_png((dir / "g.png").string());
    EXPECT_EQ(back.width, r.width);
    EXPECT_EQ(back.pixels, r.pixels);
    fs::remove_all(dir);
}

TEST(Cli, ParamsCompareAndMappingDepth) {
    const CliResult r = cli("params " + (kSource / "configs/params_all_light_256.toml").string() + " --compare original");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("ratio 0.579"), std::string::npos) << r.out;

    const fs::path dir = scratch("params");
    RunConfig c2 = parse_run_config(kMinimal, "m");
    const std::string base = std::string(kMinimal);
    write_file(dir / "d2.toml", base);
    std::string d8 = base;
    d8.replace(d8.find("mapping_depth = 2"), 17, "mapping_depth = 8");
    write_file(dir / "d8.toml", d8);
    auto total = [](const std::string& out) {
        const auto p = out.find("total");
        return std::stoll(out.substr(p + 5));
    };
    const CliResult a = cli("params " + (dir / "d2.toml").string()), b = cli("params " + (dir / "d8.toml").string());
    ASSERT_EQ(a.code, 0) << a.out;
    ASSERT_EQ(b.code, 0) << b.out;
    const long long w = c2.generator.w_dim;
    EXPECT_EQ(total(b.out) - total(a.out), 6 * (w * w + w));
    fs::remove_all(dir);
}

TEST(Cli, ErrorsExitTwoWithDiagnostics) {
    const fs::path dir = scratch("errors");
    write_file(dir / "empty.toml", "");
    const CliResult empty = cli("params " + (dir / "empty.toml").string());
    EXPECT_EQ(empty.code, 2);
    EXPECT_NE(empty.out.find("missing required keys"), std::string::npos) << empty.out;
    EXPECT_NE(empty.out.find("generator.out_res"), std::string::npos);

    std::string folder = kMinimal;
    folder.replace(folder.find("source = \"synthetic\""), 20, "source = \"folder\"\npath = \"/no/such/images\"");
    write_file(dir / "folder.toml", folder);
    const CliResult missing = cli("train " + (dir / "folder.toml").string() + " --out " + (dir / "run").string());
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.out.find("/no/such/images"), std::string::npos) << missing.out;

    write_file(dir / "typo.toml", std::string(kMinimal) + "lr_gg = 1\n");
    const CliResult typo = cli("train " + (dir / "typo.toml").string());
    EXPECT_EQ(typo.code, 2);
    EXPECT_NE(typo.out.find("typo.toml:16"), std::string::npos) << typo.out;

    write_file(dir / "bad.ckpt", "SPG0garbage");
    const CliResult bad = cli("sample " + (dir / "bad.ckpt").string() + " --out " + (dir / "x.png").string());
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.out.find("magic"), std::string::npos) << bad.out;
    EXPECT_EQ(cli("frobnicate").code, 2);
    fs::remove_all(dir);
}

TEST(Cli, GradcheckScopeAndTolerance) {
    const CliResult one = cli("gradcheck adain --trials 3");
    EXPECT_EQ(one.code, 0) << one.out;
    int rows = 0;
    std::istringstream lines(one.out);
    for (std::string l; std::getline(lines, l);) rows += l.rfind("adain ", 0) == 0;
    EXPECT_EQ(rows, 1) << one.out;
    EXPECT_EQ(one.out.find("conv2d"), std::string::npos);
    const CliResult strict = cli("gradcheck adain --trials 3 --tol 1e-30");
    EXPECT_EQ(strict.code, 1) << strict.out;
    EXPECT_NE(strict.out.find("tolerance 1.0e-30"), std::string::npos) << strict.out;
    EXPECT_EQ(cli("gradcheck nope").code, 2);
}

TEST(Cli, TrainSampleEvalRoundTrip) {
    const fs::path dir = scratch("roundtrip");
    write_file(dir / "run.toml", std::string(kMinimal) +
                                     "\n[eval]\nevery_kimg = 0.016\nn_real = 64\nn_fake = 64\n");
    std::string cfg = slurp(dir / "run.toml");
    cfg.replace(cfg.find("total_kimg = 0.5"), 16, "total_kimg = 0.016");
    cfg.replace(cfg.find("base_channels = 8"), 17, "base_channels = 8\nz_dim = 8\nw_dim = 8");
    write_file(dir / "run.toml", cfg);
    const CliResult t = cli("train " + (dir / "run.toml").string() + " --out " + (dir / "run").string() + " --quiet");
    ASSERT_EQ(t.code, 0) << t.out;
    const fs::path ckpt = dir / "run" / "checkpoints" / "latest.ckpt";
    ASSERT_TRUE(fs::exists(ckpt));

    const std::string s = "sample " + ckpt.string() + " --n 16 --seed 4 --out ";
    ASSERT_EQ(cli(s + (dir / "a.png").string()).code, 0);
    ASSERT_EQ(cli(s + (dir / "b.png").string()).code, 0);
    EXPECT_EQ(slurp(dir / "a.png"), slurp(dir / "b.png"));
    const RgbImage grid = read_png((dir / "a.png").string());
    EXPECT_EQ(grid.width, 4 * 32);
    EXPECT_EQ(grid.height, 4 * 32);
    ASSERT_EQ(cli("sample " + ckpt.string() + " --n 16 --seed 4 --noise-at-sample false --out " +
                  (dir / "c.png").string()).code, 0);
    EXPECT_NE(slurp(dir / "a.png"), slurp(dir / "c.png"));
    EXPECT_EQ(cli("sample " + ckpt.string() + " --n 0 --out " + (dir / "d.png").string()).code, 2);

    const CliResult rr = cli("eval --config " + (dir / "run.toml").string() + " --real-vs-real --out " +
                       (dir / "rr.csv").string());
    ASSERT_EQ(rr.code, 0) << rr.out;
    const std::string csv = slurp(dir / "rr.csv");
    EXPECT_EQ(csv.rfind(std::string(kMetricsHeader) + "\n", 0), 0u);
    std::istringstream row(csv.substr(csv.find('\n') + 1));
    std::string kimg, fid, kid, prec, rec;
    std::getline(row, kimg, ',');
    std::getline(row, fid, ',');
    std::getline(row, kid, ',');
    std::getline(row, prec, ',');
    std::getline(row, rec, ',');
    EXPECT_LT(std::stod(fid), 1e-4);
    EXPECT_EQ(prec, "1");
    EXPECT_EQ(rec, "1");

    const CliResult ev = cli("eval " + ckpt.string() + " --n-fake 64 --export-features " + (dir / "feat").string());
    ASSERT_EQ(ev.code, 0) << ev.out;
    std::ifstream m(dir / "run" / "metrics.csv");
    int header_lines = 0;
    for (std::string l; std::getline(m, l);) header_lines += l == kMetricsHeader;
    EXPECT_EQ(header_lines, 1);
    EXPECT_TRUE(fs::exists(dir / "feat.real.feat"));
    EXPECT_TRUE(fs::exists(dir / "feat.fake.feat"));
    EXPECT_EQ(cli("eval " + ckpt.string() + " --n-fake 10").code, 2);
    fs::remove_all(dir);
}
