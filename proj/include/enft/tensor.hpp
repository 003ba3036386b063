#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "enft/errors.hpp"
#include "enft/rng.hpp"

namespace enft {

// Dense row-major tensor of doubles. Rank is whatever the shape says; the
// layers only ever need ranks 1 through 4.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    }

    static long numel_of(const std::vector<int>& s) {
        if (s.empty()) throw ShapeMismatch("tensor shape must name at least one dimension");
        long n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeMismatch("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    static Tensor scalar(double x) {
        Tensor t({1});
        t.v[0] = x;
        return t;
    }

    long numel() const { return static_cast<long>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at2(int i, int j) { return v[static_cast<std::size_t>(i * dim(1) + j)]; }
    double at2(int i, int j) const { return v[static_cast<std::size_t>(i * dim(1) + j)]; }
    double& at3(int i, int j, int k) {
        return v[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    double at3(int i, int j, int k) const {
        return v[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    double& at4(int i, int j, int k, int l) {
        return v[static_cast<std::size_t>(((i * dim(1) + j) * dim(2) + k) * dim(3) + l)];
    }
    double at4(int i, int j, int k, int l) const {
        return v[static_cast<std::size_t>(((i * dim(1) + j) * dim(2) + k) * dim(3) + l)];
    }
};

// A learnable tensor with its gradient and optimizer moments, all one shape.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    Parameter(std::string n, Tensor init)
        : name(std::move(n)),
          value(std::move(init)),
          grad(value.shape),
          adam_m(value.shape),
          adam_v(value.shape) {}
};

// Symmetric-uniform initializers. Bound sqrt(6/(fan_in+fan_out)) for dense
// and convolution weights; sqrt(1/hidden) for recurrent weights.
inline Tensor uniform_init(Rng& rng, std::vector<int> shape, double bound) {
    Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
    return t;
}

inline Tensor glorot_init(Rng& rng, std::vector<int> shape, int fan_in, int fan_out) {
    return uniform_init(rng, std::move(shape),
                        std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out)));
}

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

inline void put_f64le(std::string& out, double d) {
    const std::uint64_t x = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw CorruptWeights("weight file truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i)
            x |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)])) << (8 * i);
        pos += 4;
        return x;
    }
    double f64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i)
            x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)])) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(x);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

inline std::uint32_t crc32(const char* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        c = table[(c ^ static_cast<unsigned char>(data[i])) & 0xffu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

}  // namespace detail

inline constexpr char kWeightMagic[] = "ENFTWGT1";  // 8 bytes on disk
inline constexpr std::uint32_t kWeightVersion = 1;

// Versioned binary weight container: magic, format version, parameter count,
// then per parameter: name length, name bytes, rank, dims, little-endian
// 64-bit float values. A CRC of everything preceding it closes the file, and
// a JSON sidecar (<path>.json) mirrors names and shapes for inspection.
inline void save_parameters(const std::string& path, const std::vector<Parameter>& params) {
    std::string buf;
    buf.append(kWeightMagic, 8);
    detail::put_u32le(buf, kWeightVersion);
    detail::put_u32le(buf, static_cast<std::uint32_t>(params.size()));
    for (const Parameter& p : params) {
        detail::put_u32le(buf, static_cast<std::uint32_t>(p.name.size()));
        buf.append(p.name);
        detail::put_u32le(buf, static_cast<std::uint32_t>(p.value.rank()));
        for (int d : p.value.shape) detail::put_u32le(buf, static_cast<std::uint32_t>(d));
        for (double x : p.value.v) detail::put_f64le(buf, x);
    }
    detail::put_u32le(buf, detail::crc32(buf.data(), buf.size()));

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os || !os.write(buf.data(), static_cast<std::streamsize>(buf.size())))
        throw IoFailure("cannot write weights: " + path);

    nlohmann::json side;
    side["format_version"] = kWeightVersion;
    side["parameters"] = nlohmann::json::array();
    for (const Parameter& p : params)
        side["parameters"].push_back({{"name", p.name}, {"shape", p.value.shape}});
    std::ofstream js(path + ".json", std::ios::trunc);
    if (!js || !(js << side.dump(2) << "\n")) throw IoFailure("cannot write sidecar: " + path);
}

// Loads values only; gradients and moments come back zeroed.
inline std::vector<Parameter> load_parameters(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open weights: " + path);
    std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    if (buf.size() < 8 + 4 + 4 + 4) throw CorruptWeights("weight file truncated");
    if (std::memcmp(buf.data(), kWeightMagic, 8) != 0)
        throw CorruptWeights("weight file magic mismatch");
    const std::uint32_t stored_crc = [&] {
        detail::ByteReader tail{buf, buf.size() - 4};
        return tail.u32();
    }();
    if (detail::crc32(buf.data(), buf.size() - 4) != stored_crc)
        throw CorruptWeights("weight file checksum mismatch");

    detail::ByteReader r{buf, 8};
    const std::uint32_t version = r.u32();
    if (version != kWeightVersion) throw VersionMismatch("unsupported weight format version");
    const std::uint32_t count = r.u32();

    std::vector<Parameter> params;
    params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        if (name_len > 4096) throw CorruptWeights("implausible parameter name length");
        const std::string name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) throw CorruptWeights("implausible parameter rank");
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32();
            if (dim == 0 || dim > (1u << 24)) throw CorruptWeights("implausible dimension");
            shape.push_back(static_cast<int>(dim));
        }
        Tensor t(shape);
        for (double& x : t.v) x = r.f64();
        params.emplace_back(name, std::move(t));
    }
    if (r.pos != buf.size() - 4) throw CorruptWeights("trailing bytes after parameters");
    return params;
}

// Loads into an already built parameter set, insisting the stored names and
// shapes line up one-for-one with what the caller expects.
inline void load_parameters(const std::string& path, std::vector<Parameter>& into) {
    std::vector<Parameter> loaded = load_parameters(path);
    if (loaded.size() != into.size()) throw CorruptWeights("parameter count mismatch");
    for (std::size_t i = 0; i < into.size(); ++i) {
        if (loaded[i].name != into[i].name)
            throw CorruptWeights("parameter name mismatch: expected " + into[i].name + ", found " +
                                 loaded[i].name);
        if (!loaded[i].value.same_shape(into[i].value))
            throw CorruptWeights("parameter shape mismatch: " + into[i].name);
        into[i].value = std::move(loaded[i].value);
    }
}

}  // namespace enft
