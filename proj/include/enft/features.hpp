#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "enft/errors.hpp"

namespace enft {

// Fixed-shape inputs for the two network branches. Both framings copy phase
// values verbatim (never interpolate) and zero-pad positions past the end of
// the sequence, so a corpus of mixed-length clips maps to identical shapes.

// Square arrangement: n overlapping segments of length n stacked as rows.
struct SpatialFeature {
    int n = 0;
    std::vector<double> m;  // row-major n*n

    double& at(int r, int c) { return m[static_cast<std::size_t>(r) * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)]; }
    double at(int r, int c) const { return m[static_cast<std::size_t>(r) * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)]; }
};

// Sequence arrangement: f_n frames of p_n phase points, one frame per column,
// consumed by the recurrent branch as a length-f_n sequence of p_n-vectors.
struct TemporalFeature {
    int p_n = 0;
    int f_n = 0;
    std::vector<double> m;  // row-major p_n*f_n

    double& at(int r, int c) { return m[static_cast<std::size_t>(r) * static_cast<std::size_t>(f_n) + static_cast<std::size_t>(c)]; }
    double at(int r, int c) const { return m[static_cast<std::size_t>(r) * static_cast<std::size_t>(f_n) + static_cast<std::size_t>(c)]; }
};

// Side length of the square arrangement for a whole corpus, from the longest
// phase sequence in it. Anything shorter reuses the same n and pads.
inline int corpus_spatial_size(int max_len) {
    if (max_len < 4) throw InvalidParams("corpus maximum must be at least 4 phase points");
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(max_len))));
}

// Frame count of the sequence arrangement for a whole corpus.
inline int corpus_temporal_size(int max_len, int p_n) {
    if (p_n < 1) throw InvalidParams("frame size must be positive");
    if (max_len < p_n) throw InvalidParams("corpus maximum shorter than one frame");
    return static_cast<int>((max_len + p_n - 1) / p_n);
}

// n rows of length n at uniform shift s = ceil((L - n)/(n - 1)): the largest
// even spacing whose last row still reaches the end of the sequence. For
// L <= n^2 consecutive rows then overlap or abut, so every input index lands
// in some row. Sequences so short that the formula gives s <= 0 fall back to
// shift 1 and rely on padding.
inline SpatialFeature spatial_features(const std::vector<double>& psi1, int n) {
    const int len = static_cast<int>(psi1.size());
    if (n < 2) throw InvalidParams("spatial size must be at least 2");
    if (len < n) throw TooShort("phase sequence shorter than one spatial row");
    int s = static_cast<int>(std::ceil(static_cast<double>(len - n) / (n - 1)));
    if (s <= 0) s = 1;

    SpatialFeature out;
    out.n = n;
    out.m.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int r = 0; r < n; ++r) {
        const int off = r * s;
        for (int c = 0; c < n; ++c) {
            const int idx = off + c;
            if (idx < len) out.at(r, c) = psi1[static_cast<std::size_t>(idx)];
        }
    }
    return out;
}

// f_n columns of length p_n at uniform shift s = floor(L / f_n). The corpus
// sizing guarantees s <= p_n for every clip (no gaps between consecutive
// columns), but a clip whose length is not a multiple of f_n can leave up to
// f_n - 1 trailing phase points uncovered.
inline TemporalFeature temporal_features(const std::vector<double>& psi1, int p_n, int f_n) {
    const int len = static_cast<int>(psi1.size());
    if (p_n < 1 || f_n < 1) throw InvalidParams("frame dimensions must be positive");
    if (len < p_n) throw TooShort("phase sequence shorter than one temporal frame");
    const int s = len / f_n;

    TemporalFeature out;
    out.p_n = p_n;
    out.f_n = f_n;
    out.m.assign(static_cast<std::size_t>(p_n) * static_cast<std::size_t>(f_n), 0.0);
    for (int j = 0; j < f_n; ++j) {
        const int off = j * s;
        for (int r = 0; r < p_n; ++r) {
            const int idx = off + r;
            if (idx < len) out.at(r, j) = psi1[static_cast<std::size_t>(idx)];
        }
    }
    return out;
}

// Rectangular CSV of doubles, written with enough digits to round-trip
// exactly and read back with shape discovery.
struct MatrixData {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;  // row-major

    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
};

inline void write_matrix_csv(const std::string& path, int rows, int cols, const double* data) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoFailure("cannot open for writing: " + path);
    char buf[64];
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]);
            os << buf << (c + 1 < cols ? "," : "\n");
        }
    }
    if (!os) throw IoFailure("write error: " + path);
}

inline MatrixData load_matrix_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoFailure("cannot open: " + path);
    MatrixData out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        int cols = 0;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw DataError("non-numeric cell in " + path);
            }
            if (used != cell.size()) throw DataError("trailing characters in cell in " + path);
            out.v.push_back(v);
            ++cols;
        }
        if (out.rows == 0)
            out.cols = cols;
        else if (cols != out.cols)
            throw DataError("ragged rows in " + path);
        ++out.rows;
    }
    if (out.rows == 0) throw DataError("empty matrix file: " + path);
    return out;
}

}  // namespace enft
