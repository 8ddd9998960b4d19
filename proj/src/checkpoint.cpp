#include "omd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace omd {
namespace {

constexpr char kMagic[4] = {'O', 'M', 'D', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    auto len = read_pod<std::uint32_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void save_checkpoint(const std::string& path, const ParamVector& theta,
                     const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kCheckpointVersion);
    write_pod<std::uint32_t>(os, meta.epoch);
    write_pod<std::uint64_t>(os, meta.config_digest);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(theta.layout.size()));
    for (const auto& seg : theta.layout) {
        write_string(os, seg.name);
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(seg.shape.size()));
        for (std::size_t d : seg.shape) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    }
    os.write(reinterpret_cast<const char*>(theta.values.data()),
             static_cast<std::streamsize>(theta.values.size() * sizeof(double)));
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, const Layout* expected_layout,
                           const std::uint64_t* expected_digest) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    auto version = read_pod<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version in " + path);

    Checkpoint out;
    out.meta.epoch = read_pod<std::uint32_t>(is);
    out.meta.config_digest = read_pod<std::uint64_t>(is);
    auto nseg = read_pod<std::uint32_t>(is);
    out.theta.layout.resize(nseg);
    for (auto& seg : out.theta.layout) {
        seg.name = read_string(is);
        auto ndim = read_pod<std::uint32_t>(is);
        seg.shape.resize(ndim);
        for (auto& d : seg.shape) d = read_pod<std::uint32_t>(is);
    }
    std::size_t n = layout_size(out.theta.layout);
    out.theta.values.resize(n);
    is.read(reinterpret_cast<char*>(out.theta.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated payload in " + path);

    if (expected_layout && out.theta.layout != *expected_layout)
        throw std::runtime_error("checkpoint: layout mismatch in " + path);
    if (expected_digest && out.meta.config_digest != *expected_digest)
        throw std::runtime_error("checkpoint: config digest mismatch in " + path);
    return out;
}

}  // namespace omd
