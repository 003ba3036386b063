#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "enft/errors.hpp"

namespace enft {

// Mono audio in [-1, 1] doubles. sample_rate in Hz.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

namespace detail {

inline std::uint16_t read_u16le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_u16le(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

inline void write_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

// Strict 16-bit PCM mono reader. Walks RIFF chunks, skips unknown ones,
// and refuses anything it would silently misread.
inline AudioClip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open for reading: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoFailure("read error: " + path);

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw MalformedWav("not a RIFF/WAVE file: " + path);

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data_ptr = nullptr;
    std::uint32_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t sz = detail::read_u32le(bytes.data() + pos + 4);
        pos += 8;
        if (sz > bytes.size() - pos) throw MalformedWav("truncated chunk in " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (sz < 16) throw MalformedWav("fmt chunk too small in " + path);
            const unsigned char* f = bytes.data() + pos;
            format = detail::read_u16le(f);
            channels = detail::read_u16le(f + 2);
            rate = detail::read_u32le(f + 4);
            bits = detail::read_u16le(f + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_ptr = bytes.data() + pos;
            data_len = sz;
        }
        pos += sz + (sz & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data_ptr == nullptr) throw MalformedWav("missing fmt or data chunk: " + path);
    if (format != 1) throw UnsupportedFormat("only PCM supported: " + path);
    if (channels != 1) throw UnsupportedFormat("only mono supported: " + path);
    if (bits != 16) throw UnsupportedFormat("only 16-bit supported: " + path);
    if (rate == 0) throw MalformedWav("zero sample rate: " + path);

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    const std::size_t n = data_len / 2;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint16_t u = detail::read_u16le(data_ptr + 2 * i);
        const std::int16_t s = static_cast<std::int16_t>(u);
        clip.samples[i] = static_cast<double>(s) / 32768.0;
    }
    return clip;
}

inline void save_wav(const std::string& path, const AudioClip& clip) {
    if (clip.sample_rate <= 0) throw InvalidRate("sample rate must be positive");
    std::vector<unsigned char> out;
    out.reserve(44 + clip.samples.size() * 2);
    const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    detail::write_u32le(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    detail::write_u32le(out, 16);
    detail::write_u16le(out, 1);  // PCM
    detail::write_u16le(out, 1);  // mono
    detail::write_u32le(out, static_cast<std::uint32_t>(clip.sample_rate));
    detail::write_u32le(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);  // byte rate
    detail::write_u16le(out, 2);   // block align
    detail::write_u16le(out, 16);  // bits
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    detail::write_u32le(out, data_len);
    for (const double x : clip.samples) {
        const double c = x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
        long v = std::lround(c * 32768.0);
        if (v > 32767) v = 32767;
        if (v < -32768) v = -32768;
        detail::write_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoFailure("write error: " + path);
}

}  // namespace enft
