#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spgan/config.hpp"
#include "spgan/tensor.hpp"

namespace spgan {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major RGB8
};

RgbImage read_png(const std::string& path);
void write_png(const std::string& path, const RgbImage& image);

// In-memory image set, pixels in [-1, 1], CHW per image.
struct ImageSet {
    int resolution = 0;
    int64_t count = 0;
    int64_t skipped = 0;  // undecodable files (folder sources)
    std::vector<float> pixels;

    Tensor gather(const std::vector<int64_t>& indices) const;
    Tensor first(int64_t n) const;
};

// Center-crop to square, bilinear resize to res, map [0,255] to [-1,1].
std::vector<float> preprocess(const RgbImage& image, int res);

ImageSet synthetic_images(const std::string& kind, int res, int64_t n, uint64_t seed);
// Sorted *.png listing; undecodable files are skipped with a warning on stderr.
// Throws IoError naming the path when the directory is missing.
ImageSet folder_images(const std::string& dir, int res);
ImageSet load_images(const DataConfig& data, int res);

// Seeded per-epoch reshuffle, partial final batch dropped. batch(s) is a pure function of
// (seed, s), so a resumed run sees exactly the batches the uninterrupted one would.
class BatchStream {
   public:
    BatchStream(const ImageSet& images, int batch_size, uint64_t seed);

    int64_t batches_per_epoch() const { return batches_per_epoch_; }
    std::vector<int64_t> batch_indices(int64_t step) const;
    Tensor batch(int64_t step) const { return images_->gather(batch_indices(step)); }

   private:
    std::vector<int64_t> epoch_order(int64_t epoch) const;

    const ImageSet* images_;
    int batch_size_;
    uint64_t seed_;
    int64_t batches_per_epoch_;
};

// Tiles [N,3,R,R] images in [-1,1] into rows of `cols` (default ceil(sqrt(N))); the last row
// may be partially filled, empty cells are black.
RgbImage make_grid(const Tensor& images, int cols = 0);

}  // namespace spgan
