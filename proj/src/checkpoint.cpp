#include "spgan/checkpoint.hpp"

#include "spgan/binio.hpp"
#include "spgan/config.hpp"

namespace spgan {

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
        if (n == name) return &t;
    return nullptr;
}

const Tensor& Checkpoint::at(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw IoError("checkpoint has no array named '" + name + "'");
    return *t;
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
    binio::Writer w;
    w.bytes("SPG1", 4);
    w.put<uint32_t>(kCheckpointVersion);
    w.put<uint64_t>(c.config_digest);
    w.str(c.config_text);
    w.put<uint64_t>(c.step);
    w.put<uint64_t>(c.projection_seed);
    w.put<uint32_t>(static_cast<uint32_t>(c.arrays.size()));
    for (const auto& [name, t] : c.arrays) {
        w.str(name);
        w.put<uint32_t>(static_cast<uint32_t>(t.ndim()));
        for (int64_t d : t.shape()) w.put<int64_t>(d);
        for (float v : t.data()) w.put<float>(v);
    }
    return w.buffer();
}

Checkpoint decode_checkpoint(std::vector<unsigned char> bytes, const std::string& source) {
    binio::Reader r(std::move(bytes), source);
    if (r.remaining() < 4 || r.raw(4) != "SPG1") r.fail("not a checkpoint (bad magic, expected SPG1)");
    const auto version = r.get<uint32_t>();
    if (version != kCheckpointVersion)
        r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
               std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.config_digest = r.get<uint64_t>();
    c.config_text = r.str();
    if (config_digest(c.config_text) != c.config_digest) r.fail("config digest mismatch (corrupt header)");
    c.step = r.get<uint64_t>();
    c.projection_seed = r.get<uint64_t>();
    const auto count = r.get<uint32_t>();
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(4096);
        const auto ndim = r.get<uint32_t>();
        if (ndim > 8) r.fail("array '" + name + "' has implausible rank " + std::to_string(ndim));
        Shape shape;
        int64_t numel = 1;
        for (uint32_t k = 0; k < ndim; ++k) {
            const auto d = r.get<int64_t>();
            if (d < 1) r.fail("array '" + name + "' has non-positive dimension");
            shape.push_back(d);
            numel *= d;
        }
        if (static_cast<uint64_t>(numel) * sizeof(float) > r.remaining()) r.fail("truncated array '" + name + "'");
        std::vector<float> data(static_cast<size_t>(numel));
        for (auto& v : data) v = r.get<float>();
        c.arrays.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!r.at_end()) r.fail("trailing bytes after last array");
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    binio::Writer w;
    const auto bytes = encode_checkpoint(ckpt);
    w.bytes(bytes.data(), bytes.size());
    w.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
    auto r = binio::Reader::open(path);
    std::vector<unsigned char> all;
    all.reserve(r.remaining());
    const std::string raw = r.raw(r.remaining());
    all.assign(raw.begin(), raw.end());
    return decode_checkpoint(std::move(all), path);
}

}  // namespace spgan
