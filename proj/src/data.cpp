#include "spgan/data.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "spgan/rng.hpp"

namespace spgan {

RgbImage read_png(const std::string& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw IoError("cannot decode PNG '" + path + "': " + img.message);
    img.format = PNG_FORMAT_RGB;
    RgbImage out;
    out.width = static_cast<int>(img.width);
    out.height = static_cast<int>(img.height);
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode PNG '" + path + "': " + msg);
    }
    return out;
}

void write_png(const std::string& path, const RgbImage& image) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
        throw IoError("cannot write PNG '" + path + "': " + img.message);
}

Tensor ImageSet::gather(const std::vector<int64_t>& indices) const {
    const int64_t per = 3LL * resolution * resolution;
    Tensor out(Shape{static_cast<int64_t>(indices.size()), 3, resolution, resolution});
    auto d = out.data();
    for (size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] < 0 || indices[k] >= count) throw UsageError("ImageSet: index out of range");
        std::copy_n(pixels.begin() + indices[k] * per, per, d.begin() + static_cast<int64_t>(k) * per);
    }
    return out;
}

Tensor ImageSet::first(int64_t n) const {
    std::vector<int64_t> idx(static_cast<size_t>(std::min(n, count)));
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
    return gather(idx);
}

std::vector<float> preprocess(const RgbImage& image, int res) {
    const int side = std::min(image.width, image.height);
    if (side < 1) throw IoError("empty image");
    const int x0 = (image.width - side) / 2, y0 = (image.height - side) / 2;
    const double scale = static_cast<double>(side) / res;
    std::vector<float> out(3ULL * res * res);
    auto px = [&](int x, int y, int c) {
        x = std::clamp(x, 0, side - 1);
        y = std::clamp(y, 0, side - 1);
        return image.pixels[(static_cast<size_t>(y0 + y) * image.width + (x0 + x)) * 3 + c];
    };
    for (int y = 0; y < res; ++y) {
        const double sy = (y + 0.5) * scale - 0.5;
        const int iy = static_cast<int>(std::floor(sy));
        const double fy = sy - iy;
        for (int x = 0; x < res; ++x) {
            const double sx = (x + 0.5) * scale - 0.5;
            const int ix = static_cast<int>(std::floor(sx));
            const double fx = sx - ix;
            for (int c = 0; c < 3; ++c) {
                const double v = (1 - fy) * ((1 - fx) * px(ix, iy, c) + fx * px(ix + 1, iy, c)) +
                                 fy * ((1 - fx) * px(ix, iy + 1, c) + fx * px(ix + 1, iy + 1, c));
                out[(static_cast<size_t>(c) * res + y) * res + x] = static_cast<float>(v / 127.5 - 1.0);
            }
        }
    }
    return out;
}

namespace {

using Color = std::array<double, 3>;

void render_blob(float* dst, int res, Rng& rng) {
    // Two looks: dark background with a bright blob, or light background with a dark blob.
    const bool light = rng.uniform() < 0.5;
    const Color bg = light ? Color{0.6, 0.5, 0.7} : Color{-0.7, -0.6, -0.2};
    const Color fg = light ? Color{-0.8, -0.7, -0.9} : Color{0.9, 0.8, -0.5};
    const double cx = rng.uniform(0.3, 0.7) * res, cy = rng.uniform(0.3, 0.7) * res;
    const double sigma = rng.uniform(0.08, 0.15) * res;
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const double d2 = (x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy);
            const double a = std::exp(-d2 / (2 * sigma * sigma));
            for (int c = 0; c < 3; ++c) dst[(c * res + y) * res + x] = static_cast<float>(bg[c] + (fg[c] - bg[c]) * a);
        }
    }
}

void render_checker(float* dst, int res, Rng& rng) {
    const int cell = std::max(1, res / (rng.uniform() < 0.5 ? 8 : 4));
    const int ox = static_cast<int>(rng.below(static_cast<uint64_t>(cell)));
    const int oy = static_cast<int>(rng.below(static_cast<uint64_t>(cell)));
    Color a, b;
    for (int c = 0; c < 3; ++c) {
        a[c] = rng.uniform(-1.0, -0.2);
        b[c] = rng.uniform(0.2, 1.0);
    }
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const bool on = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 0;
            for (int c = 0; c < 3; ++c) dst[(c * res + y) * res + x] = static_cast<float>(on ? a[c] : b[c]);
        }
    }
}

void render_ring(float* dst, int res, Rng& rng) {
    const double cx = (0.5 + rng.uniform(-0.1, 0.1)) * res, cy = (0.5 + rng.uniform(-0.1, 0.1)) * res;
    const double radius = rng.uniform(0.2, 0.4) * res, width = rng.uniform(0.04, 0.09) * res;
    Color fg;
    for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(0.0, 1.0);
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
            const double a = std::exp(-(r - radius) * (r - radius) / (2 * width * width));
            for (int c = 0; c < 3; ++c) dst[(c * res + y) * res + x] = static_cast<float>(-0.9 + (fg[c] + 0.9) * a);
        }
    }
}

}  // namespace

ImageSet synthetic_images(const std::string& kind, int res, int64_t n, uint64_t seed) {
    void (*render)(float*, int, Rng&) = nullptr;
    if (kind == "two_mode_blobs") render = render_blob;
    else if (kind == "checkerboard") render = render_checker;
    else if (kind == "gaussian_rings") render = render_ring;
    else throw ConfigError("unknown synthetic dataset kind '" + kind + "'");
    if (res < 1 || n < 1) throw ConfigError("synthetic dataset needs res >= 1 and n >= 1");
    ImageSet set;
    set.resolution = res;
    set.count = n;
    const int64_t per = 3LL * res * res;
    set.pixels.resize(static_cast<size_t>(n * per));
    for (int64_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, kind, static_cast<uint64_t>(i)));
        render(set.pixels.data() + i * per, res, rng);
    }
    return set;
}

ImageSet folder_images(const std::string& dir, int res) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("dataset path '" + dir + "' does not exist or is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    ImageSet set;
    set.resolution = res;
    for (const auto& f : files) {
        try {
            auto px = preprocess(read_png(f.string()), res);
            set.pixels.insert(set.pixels.end(), px.begin(), px.end());
            ++set.count;
        } catch (const IoError& err) {
            std::cerr << "warning: skipping " << err.what() << "\n";
            ++set.skipped;
        }
    }
    if (set.skipped) std::cerr << "warning: skipped " << set.skipped << " undecodable image(s) in " << dir << "\n";
    if (set.count == 0) throw IoError("dataset path '" + dir + "' contains no decodable PNG images");
    return set;
}

ImageSet load_images(const DataConfig& data, int res) {
    if (data.source == "folder") return folder_images(data.path, res);
    return synthetic_images(data.kind, res, data.n, data.seed);
}

BatchStream::BatchStream(const ImageSet& images, int batch_size, uint64_t seed)
    : images_(&images), batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    batches_per_epoch_ = images.count / batch_size;
    if (batches_per_epoch_ < 1)
        throw ConfigError("dataset has " + std::to_string(images.count) + " images, fewer than one batch of " +
                          std::to_string(batch_size));
}

std::vector<int64_t> BatchStream::epoch_order(int64_t epoch) const {
    std::vector<int64_t> order(static_cast<size_t>(images_->count));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    Rng rng(derive_seed(seed_, "shuffle", static_cast<uint64_t>(epoch)));
    // Explicit Fisher-Yates: std::shuffle's algorithm is implementation-defined.
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

std::vector<int64_t> BatchStream::batch_indices(int64_t step) const {
    const int64_t epoch = step / batches_per_epoch_, k = step % batches_per_epoch_;
    const auto order = epoch_order(epoch);
    return {order.begin() + k * batch_size_, order.begin() + (k + 1) * batch_size_};
}

RgbImage make_grid(const Tensor& images, int cols) {
    if (images.ndim() != 4 || images.dim(1) != 3) throw ConfigError("make_grid: expected [N,3,H,W]");
    const int64_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
    if (cols <= 0) cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)) - 1e-9));
    cols = std::max(1, cols);
    const int64_t rows = (n + cols - 1) / cols;
    RgbImage out;
    out.width = static_cast<int>(cols * w);
    out.height = static_cast<int>(rows * h);
    out.pixels.assign(static_cast<size_t>(out.width) * out.height * 3, 0);
    const auto d = images.data();
    for (int64_t i = 0; i < n; ++i) {
        const int64_t gx = (i % cols) * w, gy = (i / cols) * h;
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    const double v = d[static_cast<size_t>(((i * 3 + c) * h + y) * w + x)];
                    const double q = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
                    out.pixels[static_cast<size_t>(((gy + y) * out.width + gx + x) * 3 + c)] = static_cast<uint8_t>(q);
                }
    }
    return out;
}

}  // namespace spgan
