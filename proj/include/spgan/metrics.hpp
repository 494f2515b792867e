#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "spgan/tensor.hpp"

namespace spgan {

// Rows are samples. 64-bit throughout.
struct FeatureMatrix {
    Eigen::MatrixXd rows;
    std::string extractor_id;
};

struct FeatureStats {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;  // unbiased sample covariance
    int64_t n = 0;
};

struct MetricsReport {
    double fid = 0.0;
    double kid = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    int64_t n_real = 0;
    int64_t n_fake = 0;
    std::string extractor_id;
};

// Fixed random conv net: three stride-2 4x4 convs with leaky_relu, then global average
// pooling to D features. Stands in for a pretrained embedding; its numbers are only
// comparable between reports with the same extractor_id.
class FeatureExtractor {
   public:
    static constexpr int64_t kDefaultDim = 64;

    explicit FeatureExtractor(uint64_t seed, int64_t dim = kDefaultDim);

    const std::string& id() const { return id_; }
    int64_t dim() const { return dim_; }
    // images [N,3,R,R] with R >= 8, N >= 2.
    FeatureMatrix extract(const Tensor& images) const;

   private:
    int64_t dim_;
    std::string id_;
    Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

FeatureStats compute_stats(const Eigen::MatrixXd& feats);

// Throws NumericError if sigma is asymmetric beyond 1e-9 or has eigenvalues below -1e-8.
void check_stats(const FeatureStats& s, const char* what);

// Symmetric eigendecomposition with negative eigenvalues clamped to zero.
// Throws UsageError when S is not symmetric within 1e-9 (relative to its largest entry).
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& s);

double fid(const FeatureStats& real, const FeatureStats& fake);

// Polynomial kernel (a.b / D + 1)^3.
double kid_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
// Unbiased MMD^2 averaged over min(N_r, N_g) / block_size disjoint blocks of consecutive rows.
double kid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int64_t block_size);
int64_t default_kid_block(int64_t n_real, int64_t n_fake);

// k-NN manifold estimate; a point is covered when it lies within the k-th neighbour
// distance of some point of the other set.
std::pair<double, double> precision_recall(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int k);

MetricsReport evaluate(const FeatureMatrix& real, const FeatureMatrix& fake, int64_t kid_block_size, int k);

// Little-endian: "SPGF", u32 version, u64 D, u64 N, u32 id length, id bytes, N*D float64 row-major.
void save_features(const std::string& path, const FeatureMatrix& f);
FeatureMatrix load_features(const std::string& path);

}  // namespace spgan
