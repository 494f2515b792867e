#include "spgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include <Eigen/Eigenvalues>

#include "spgan/binio.hpp"
#include "spgan/ops.hpp"
#include "spgan/rng.hpp"

namespace spgan {

namespace {

Tensor he_conv(int64_t out, int64_t in, Rng& rng) {
    Tensor t(Shape{out, in, 4, 4});
    const double std = std::sqrt(2.0 / static_cast<double>(in * 16));
    for (auto& v : t.data()) v = static_cast<float>(std * rng.normal());
    return t;
}

Tensor small_bias(int64_t n, Rng& rng) {
    Tensor t(Shape{n});
    for (auto& v : t.data()) v = static_cast<float>(0.1 * rng.normal());
    return t;
}

}  // namespace

FeatureExtractor::FeatureExtractor(uint64_t seed, int64_t dim) : dim_(dim) {
    if (dim < 1) throw ConfigError("FeatureExtractor: dim must be >= 1");
    Rng rng(derive_seed(seed, "extractor.init"));
    w1_ = he_conv(32, 3, rng);
    b1_ = small_bias(32, rng);
    w2_ = he_conv(64, 32, rng);
    b2_ = small_bias(64, rng);
    w3_ = he_conv(dim, 64, rng);
    b3_ = small_bias(dim, rng);
    uint64_t h = derive_seed(seed, "extractor.id");
    for (const Tensor* t : {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}) {
        const auto d = t->data();
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(d.data()), d.size_bytes()), h);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "toyconv-d%lld-%016llx", static_cast<long long>(dim),
                  static_cast<unsigned long long>(h));
    id_ = buf;
}

FeatureMatrix FeatureExtractor::extract(const Tensor& images) const {
    if (images.ndim() != 4 || images.dim(1) != 3)
        throw ConfigError("extract_features: expected [N,3,R,R], got " + shape_str(images.shape()));
    const int64_t n = images.dim(0), r = images.dim(2);
    if (n < 2) throw UsageError("extract_features: need N >= 2 images, got " + std::to_string(n));
    if (r < 8 || r % 8 != 0 || images.dim(3) != r)
        throw ConfigError("extract_features: resolution must be a multiple of 8, got " + shape_str(images.shape()));
    Tape::Pause pause;
    FeatureMatrix out;
    out.extractor_id = id_;
    out.rows.resize(n, dim_);
    const int64_t per = 3 * r * r;
    constexpr int64_t kChunk = 64;
    for (int64_t s = 0; s < n; s += kChunk) {
        const int64_t m = std::min(kChunk, n - s);
        Tensor x(Shape{m, 3, r, r},
                 std::vector<float>(images.data().begin() + s * per, images.data().begin() + (s + m) * per));
        Tensor h = leaky_relu(conv2d(x, w1_, b1_, 2, 1), 0.2);
        h = leaky_relu(conv2d(h, w2_, b2_, 2, 1), 0.2);
        h = leaky_relu(conv2d(h, w3_, b3_, 2, 1), 0.2);
        const int64_t hw = h.dim(2) * h.dim(3);
        const auto d = h.data();
        for (int64_t i = 0; i < m; ++i) {
            for (int64_t c = 0; c < dim_; ++c) {
                double acc = 0.0;
                const float* p = d.data() + (i * dim_ + c) * hw;
                for (int64_t k = 0; k < hw; ++k) acc += p[k];
                out.rows(s + i, c) = acc / static_cast<double>(hw);
            }
        }
    }
    return out;
}

FeatureStats compute_stats(const Eigen::MatrixXd& feats) {
    const int64_t n = feats.rows();
    if (n < 2) throw UsageError("compute_stats: need at least 2 samples, got " + std::to_string(n));
    FeatureStats s;
    s.n = n;
    s.mu = feats.colwise().mean().transpose();
    const Eigen::MatrixXd centered = feats.rowwise() - s.mu.transpose();
    s.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
    s.sigma = 0.5 * (s.sigma + s.sigma.transpose()).eval();
    return s;
}

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

bool symmetric(const Eigen::MatrixXd& s) {
    return s.rows() == s.cols() && max_abs(s - s.transpose()) <= 1e-9 * std::max(1.0, max_abs(s));
}

}  // namespace

void check_stats(const FeatureStats& s, const char* what) {
    if (s.sigma.rows() != s.mu.size() || s.sigma.cols() != s.mu.size())
        throw ConfigError(std::string(what) + ": mu and sigma dimensions disagree");
    if (!symmetric(s.sigma)) throw NumericError(std::string(what) + ": covariance is not symmetric within 1e-9");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.sigma, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double floor = -1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < floor) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s: covariance is not PSD (min eigenvalue %.3e, max %.3e)", what, ev.minCoeff(),
                      ev.maxCoeff());
        throw NumericError(buf);
    }
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& s) {
    if (!symmetric(s)) throw UsageError("matrix_sqrt_psd: matrix is not symmetric within 1e-9");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

double fid(const FeatureStats& real, const FeatureStats& fake) {
    if (real.mu.size() != fake.mu.size())
        throw ConfigError("fid: feature dimensions differ (" + std::to_string(real.mu.size()) + " vs " +
                          std::to_string(fake.mu.size()) + ")");
    check_stats(real, "fid(real)");
    check_stats(fake, "fid(fake)");
    const double mean_term = (fake.mu - real.mu).squaredNorm();
    const Eigen::MatrixXd root_g = matrix_sqrt_psd(fake.sigma);
    Eigen::MatrixXd inner = root_g * real.sigma * root_g;
    inner = 0.5 * (inner + inner.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
    const double tr_root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double value = mean_term + fake.sigma.trace() + real.sigma.trace() - 2.0 * tr_root;
    return std::max(0.0, value);
}

double kid_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double t = a.dot(b) / static_cast<double>(a.size()) + 1.0;
    return t * t * t;
}

int64_t default_kid_block(int64_t n_real, int64_t n_fake) { return std::min<int64_t>({n_real, n_fake, 256}); }

double kid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int64_t block_size) {
    if (real.cols() != fake.cols()) throw ConfigError("kid: feature dimensions differ");
    if (block_size < 2 || real.rows() < block_size || fake.rows() < block_size)
        throw UsageError("kid: need N_real, N_fake >= block_size >= 2 (got " + std::to_string(real.rows()) + ", " +
                         std::to_string(fake.rows()) + ", block " + std::to_string(block_size) + ")");
    const double d = static_cast<double>(real.cols());
    const int64_t m = block_size;
    const int64_t blocks = std::min(real.rows(), fake.rows()) / m;
    auto poly = [d](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        Eigen::MatrixXd k = (a * b.transpose()).array() / d + 1.0;
        return Eigen::MatrixXd(k.array().cube());
    };
    double total = 0.0;
    for (int64_t b = 0; b < blocks; ++b) {
        const Eigen::MatrixXd x = real.middleRows(b * m, m);
        const Eigen::MatrixXd y = fake.middleRows(b * m, m);
        const Eigen::MatrixXd kxx = poly(x, x), kyy = poly(y, y), kxy = poly(x, y);
        const double md = static_cast<double>(m);
        const double sxx = (kxx.sum() - kxx.trace()) / (md * (md - 1.0));
        const double syy = (kyy.sum() - kyy.trace()) / (md * (md - 1.0));
        total += sxx + syy - 2.0 * kxy.sum() / (md * md);
    }
    return total / static_cast<double>(blocks);
}

namespace {

Eigen::MatrixXd sq_dists(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm(), nb = b.rowwise().squaredNorm();
    Eigen::MatrixXd d = -2.0 * a * b.transpose();
    d.colwise() += na;
    d.rowwise() += nb.transpose();
    return d.cwiseMax(0.0);
}

// Squared distance from each row to its k-th nearest other row (self excluded).
Eigen::VectorXd kth_radii(const Eigen::MatrixXd& x, int k) {
    const Eigen::MatrixXd d = sq_dists(x, x);
    Eigen::VectorXd r(x.rows());
    std::vector<double> row(static_cast<size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.rows(); ++j) row[static_cast<size_t>(j)] = j == i ? -1.0 : d(i, j);
        // Index 0 holds the self entry (-1) after sorting, so index k is the k-th neighbour.
        std::nth_element(row.begin(), row.begin() + k, row.end());
        r(i) = row[static_cast<size_t>(k)];
    }
    return r;
}

double coverage(const Eigen::MatrixXd& manifold, const Eigen::VectorXd& radii, const Eigen::MatrixXd& queries) {
    const Eigen::MatrixXd d = sq_dists(queries, manifold);
    int64_t inside = 0;
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        for (Eigen::Index j = 0; j < manifold.rows(); ++j) {
            if (d(q, j) <= radii(j)) {
                ++inside;
                break;
            }
        }
    }
    return static_cast<double>(inside) / static_cast<double>(queries.rows());
}

}  // namespace

std::pair<double, double> precision_recall(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int k) {
    if (real.cols() != fake.cols()) throw ConfigError("precision_recall: feature dimensions differ");
    if (k < 1 || real.rows() < k + 1 || fake.rows() < k + 1)
        throw UsageError("precision_recall: both sets need at least k+1 = " + std::to_string(k + 1) + " rows");
    const double precision = coverage(real, kth_radii(real, k), fake);
    const double recall = coverage(fake, kth_radii(fake, k), real);
    return {precision, recall};
}

MetricsReport evaluate(const FeatureMatrix& real, const FeatureMatrix& fake, int64_t kid_block_size, int k) {
    if (real.extractor_id != fake.extractor_id)
        throw UsageError("evaluate: features come from different extractors (" + real.extractor_id + " vs " +
                         fake.extractor_id + ")");
    MetricsReport r;
    r.n_real = real.rows.rows();
    r.n_fake = fake.rows.rows();
    r.extractor_id = real.extractor_id;
    r.fid = fid(compute_stats(real.rows), compute_stats(fake.rows));
    const int64_t block = kid_block_size > 0 ? kid_block_size : default_kid_block(r.n_real, r.n_fake);
    r.kid = kid(real.rows, fake.rows, block);
    std::tie(r.precision, r.recall) = precision_recall(real.rows, fake.rows, k);
    return r;
}

void save_features(const std::string& path, const FeatureMatrix& f) {
    binio::Writer w;
    w.bytes("SPGF", 4);
    w.put<uint32_t>(1);
    w.put<uint64_t>(static_cast<uint64_t>(f.rows.cols()));
    w.put<uint64_t>(static_cast<uint64_t>(f.rows.rows()));
    w.str(f.extractor_id);
    for (Eigen::Index i = 0; i < f.rows.rows(); ++i)
        for (Eigen::Index j = 0; j < f.rows.cols(); ++j) w.put<double>(f.rows(i, j));
    w.save(path);
}

FeatureMatrix load_features(const std::string& path) {
    auto r = binio::Reader::open(path);
    if (r.raw(4) != "SPGF") r.fail("not a feature file (bad magic)");
    const auto version = r.get<uint32_t>();
    if (version != 1) r.fail("unsupported feature file version " + std::to_string(version));
    const auto d = r.get<uint64_t>(), n = r.get<uint64_t>();
    FeatureMatrix f;
    f.extractor_id = r.str(4096);
    if (d == 0 || r.remaining() != n * d * sizeof(double)) r.fail("payload size does not match D x N header");
    f.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < f.rows.rows(); ++i)
        for (Eigen::Index j = 0; j < f.rows.cols(); ++j) f.rows(i, j) = r.get<double>();
    return f;
}

}  // namespace spgan
