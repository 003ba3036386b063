#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "enft/dsp.hpp"
#include "enft/errors.hpp"

namespace enft {

inline double wrap_phase(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;  // (-pi, pi]
}

inline std::vector<double> unwrap_phases(const std::vector<double>& x) {
    std::vector<double> u(x.size());
    if (x.empty()) return u;
    u[0] = x[0];
    for (std::size_t i = 1; i < x.size(); ++i) u[i] = u[i - 1] + wrap_phase(x[i] - x[i - 1]);
    return u;
}

// Analysis geometry: ten mains cycles per frame, one cycle of hop, so each
// hop advances the frame by exactly one period of the nominal frequency.
struct FrameConfig {
    int sample_rate = 0;
    int nominal = 0;
    int frame_len = 0;
    int hop = 0;
    int n_dft = 0;

    static FrameConfig make(int sample_rate, int nominal, int n_dft = 1 << 14) {
        if (sample_rate != 1000 && sample_rate != 1200)
            throw InvalidRate("analysis rate must be 1000 or 1200 Hz");
        if (nominal != 50 && nominal != 60) throw InvalidBand("nominal must be 50 or 60 Hz");
        FrameConfig c;
        c.sample_rate = sample_rate;
        c.nominal = nominal;
        c.hop = static_cast<int>(std::lround(static_cast<double>(sample_rate) / nominal));
        c.frame_len = 10 * c.hop;
        c.n_dft = n_dft;
        if (n_dft < c.frame_len || (n_dft & (n_dft - 1)) != 0)
            throw ConfigError("n_dft must be a power of two no smaller than the frame length");
        return c;
    }

    int frame_count(std::size_t samples) const {
        if (samples < static_cast<std::size_t>(frame_len)) return 0;
        return static_cast<int>((samples - static_cast<std::size_t>(frame_len)) /
                                static_cast<std::size_t>(hop)) +
               1;
    }

    double hop_seconds() const { return static_cast<double>(hop) / sample_rate; }

    // center time of frame i
    double frame_time(int i) const {
        return (static_cast<double>(i) * hop + (frame_len - 1) / 2.0) / sample_rate;
    }

    double bin_hz(double k) const { return k * static_cast<double>(sample_rate) / n_dft; }
    double hz_bin(double f) const { return f * static_cast<double>(n_dft) / sample_rate; }
    double band_lo() const { return static_cast<double>(nominal) - 10.0; }
    double band_hi() const { return static_cast<double>(nominal) + 10.0; }
};

inline std::vector<double> hann_window(int len) {
    std::vector<double> w(static_cast<std::size_t>(len));
    for (int n = 0; n < len; ++n)
        w[static_cast<std::size_t>(n)] =
            0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / (len - 1)));
    return w;
}

// Slice into overlapping frames and apply the Hann window.
inline std::vector<std::vector<double>> frame_and_window(const std::vector<double>& x,
                                                         const FrameConfig& cfg) {
    const int count = cfg.frame_count(x.size());
    if (count == 0) throw TooShort("signal shorter than one analysis frame");
    const std::vector<double> w = hann_window(cfg.frame_len);
    std::vector<std::vector<double>> frames(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        auto& f = frames[static_cast<std::size_t>(i)];
        f.resize(static_cast<std::size_t>(cfg.frame_len));
        const std::size_t off = static_cast<std::size_t>(i) * static_cast<std::size_t>(cfg.hop);
        for (int n = 0; n < cfg.frame_len; ++n)
            f[static_cast<std::size_t>(n)] =
                x[off + static_cast<std::size_t>(n)] * w[static_cast<std::size_t>(n)];
    }
    return frames;
}

// Scaled first difference; approximates the derivative at the half-sample
// points. Sample 0 has no predecessor and is set to zero -- it only ever
// appears under the zero end of the window.
inline std::vector<double> derivative_signal(const std::vector<double>& x, int sample_rate) {
    std::vector<double> d(x.size(), 0.0);
    for (std::size_t n = 1; n < x.size(); ++n)
        d[n] = static_cast<double>(sample_rate) * (x[n] - x[n - 1]);
    return d;
}

// DFT bins covering one contiguous index range of the zero-padded grid.
struct BandSpectrum {
    int k_first = 0;
    std::vector<std::complex<double>> bins;

    bool contains(int k) const {
        return k >= k_first && k < k_first + static_cast<int>(bins.size());
    }
    const std::complex<double>& at(int k) const {
        return bins[static_cast<std::size_t>(k - k_first)];
    }
};

// Direct evaluation of the windowed DFT on the bins around the mains band.
// Only ~280 of the 16384 zero-padded bins are ever consulted, so the basis
// for just those bins is precomputed and each frame costs one dense product.
class BandDft {
  public:
    explicit BandDft(const FrameConfig& cfg, int pad_bins = 2) : cfg_(cfg) {
        k_band_lo_ = static_cast<int>(std::floor(cfg.hz_bin(cfg.band_lo())));
        k_band_hi_ = static_cast<int>(std::ceil(cfg.hz_bin(cfg.band_hi())));
        k_first_ = std::max(0, k_band_lo_ - pad_bins);
        k_last_ = std::min(cfg.n_dft / 2, k_band_hi_ + pad_bins);
        const int n_bins = k_last_ - k_first_ + 1;
        basis_.resize(static_cast<std::size_t>(n_bins) * static_cast<std::size_t>(cfg.frame_len));
        for (int k = k_first_; k <= k_last_; ++k) {
            const double w = 2.0 * std::numbers::pi * k / cfg.n_dft;
            for (int n = 0; n < cfg.frame_len; ++n)
                basis_[static_cast<std::size_t>(k - k_first_) *
                           static_cast<std::size_t>(cfg.frame_len) +
                       static_cast<std::size_t>(n)] = std::polar(1.0, -w * n);
        }
    }

    const FrameConfig& config() const { return cfg_; }
    int band_k_lo() const { return k_band_lo_; }
    int band_k_hi() const { return k_band_hi_; }

    BandSpectrum transform(const std::vector<double>& windowed_frame) const {
        if (static_cast<int>(windowed_frame.size()) != cfg_.frame_len)
            throw ShapeMismatch("frame length does not match configuration");
        BandSpectrum s;
        s.k_first = k_first_;
        const int n_bins = k_last_ - k_first_ + 1;
        s.bins.resize(static_cast<std::size_t>(n_bins));
        for (int b = 0; b < n_bins; ++b) {
            const std::complex<double>* row =
                basis_.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(cfg_.frame_len);
            double re = 0.0, im = 0.0;
            for (int n = 0; n < cfg_.frame_len; ++n) {
                re += windowed_frame[static_cast<std::size_t>(n)] * row[n].real();
                im += windowed_frame[static_cast<std::size_t>(n)] * row[n].imag();
            }
            s.bins[static_cast<std::size_t>(b)] = {re, im};
        }
        return s;
    }

  private:
    FrameConfig cfg_;
    int k_band_lo_ = 0, k_band_hi_ = 0, k_first_ = 0, k_last_ = 0;
    std::vector<std::complex<double>> basis_;
};

constexpr double kPeakFloor = 1e-12;

struct PeakInfo {
    int k_peak = 0;
    double psi0 = 0.0;  // arg of the peak bin, (-pi, pi]
};

// Largest-magnitude bin inside the search band of the plain windowed DFT.
inline PeakInfo dft0_peak(const BandSpectrum& u, const BandDft& ctx) {
    int best_k = -1;
    double best_mag = -1.0;
    for (int k = ctx.band_k_lo(); k <= ctx.band_k_hi(); ++k) {
        if (!u.contains(k)) continue;
        const double m = std::abs(u.at(k));
        if (m > best_mag) {
            best_mag = m;
            best_k = k;
        }
    }
    if (best_k < 0 || best_mag < kPeakFloor)
        throw NoPeak("no spectral peak above the numerical floor in the search band");
    return PeakInfo{best_k, wrap_phase(std::arg(u.at(best_k)))};
}

// High-precision frequency from the ratio of the difference-signal DFT to
// the plain DFT. The factor below rescales the first-difference spectrum to
// the spectrum of a true derivative, making the ratio exact at bin centers.
inline double dft1_frequency(const BandSpectrum& u, const BandSpectrum& du, int k_peak,
                             const FrameConfig& cfg) {
    if (!u.contains(k_peak) || !du.contains(k_peak))
        throw ShapeMismatch("peak bin outside the computed band");
    const std::complex<double> u0 = u.at(k_peak);
    if (std::abs(u0) < kPeakFloor) throw NoPeak("peak bin magnitude below the numerical floor");
    const double wk = 2.0 * std::numbers::pi * k_peak / cfg.n_dft;
    const std::complex<double> denom = 1.0 - std::polar(1.0, -wk);
    const std::complex<double> deriv_scale = std::complex<double>(0.0, wk) / denom;
    // the difference signal already carries the sample-rate scaling, so the
    // corrected ratio is an angular frequency in rad/s
    const double f = std::abs(deriv_scale * du.at(k_peak) / u0) / (2.0 * std::numbers::pi);
    if (!(f >= cfg.band_lo() && f <= cfg.band_hi()))
        throw DegeneratePeak("refined frequency fell outside the search band");
    return f;
}

// Of the two arctangent branches, the high-precision phase is the one that
// agrees with the coarse estimate.
inline double pick_phase_branch(double psi_raw, double psi0) {
    const double a = wrap_phase(psi_raw);
    const double b = wrap_phase(psi_raw + std::numbers::pi);
    const double da = std::abs(wrap_phase(a - psi0));
    const double db = std::abs(wrap_phase(b - psi0));
    return da <= db ? a : b;
}

// Phase of the tone at the frame origin, recovered from the phase of the
// difference signal. A first difference turns cos(w0 n + phi) into a tone of
// phase phi + pi/2 - w0/2; reading its phase theta at the exact (fractional)
// frequency position and inverting gives
//   tan(psi) = [tan(theta)(1 - cos w0) - sin w0] / [(1 - cos w0) + tan(theta) sin w0],
// computed here in atan2 form. theta comes from linear interpolation of the
// bin phases bracketing the refined frequency, which is exact for a
// symmetric window (the phase of the window transform is linear in the bin).
inline double dft1_phase(const BandSpectrum& du, double f_dft1, double psi0,
                         const FrameConfig& cfg) {
    const double k_pos = cfg.hz_bin(f_dft1);
    const int k_lo = static_cast<int>(std::floor(k_pos));
    const int k_hi = static_cast<int>(std::ceil(k_pos));
    if (!du.contains(k_lo) || !du.contains(k_hi))
        throw InterpolationFailure("bracketing bins outside the computed band");

    double theta;
    if (k_lo == k_hi) {
        if (std::abs(du.at(k_lo)) < kPeakFloor)
            throw InterpolationFailure("difference spectrum vanishes at the frequency bin");
        theta = std::arg(du.at(k_lo));
    } else {
        if (std::abs(du.at(k_lo)) < kPeakFloor || std::abs(du.at(k_hi)) < kPeakFloor)
            throw InterpolationFailure("difference spectrum vanishes at a bracketing bin");
        const double th_lo = std::arg(du.at(k_lo));
        double th_hi = std::arg(du.at(k_hi));
        // keep the pair on the same branch before interpolating
        while (th_hi - th_lo > std::numbers::pi) th_hi -= 2.0 * std::numbers::pi;
        while (th_hi - th_lo < -std::numbers::pi) th_hi += 2.0 * std::numbers::pi;
        theta = th_lo + (k_pos - k_lo) * (th_hi - th_lo);
    }

    const double w0 = 2.0 * std::numbers::pi * f_dft1 / cfg.sample_rate;
    const double one_minus_cos = 1.0 - std::cos(w0);
    const double sin_w0 = std::sin(w0);
    const double num = std::sin(theta) * one_minus_cos - std::cos(theta) * sin_w0;
    const double den = std::cos(theta) * one_minus_cos + std::sin(theta) * sin_w0;
    const double psi_raw = std::atan2(num, den);
    return pick_phase_branch(psi_raw, psi0);
}

struct PhaseSequence {
    FrameConfig cfg;
    std::vector<double> psi0;
    std::vector<double> psi1;
    std::vector<double> freq1;
    std::vector<unsigned char> flag;  // 1 where the frame estimate was carried forward

    std::size_t size() const { return psi1.size(); }
};

// Whole-clip pass: coarse peak phase, refined frequency, refined phase per
// frame. A frame whose estimate fails keeps the previous frame's values and
// is flagged instead of aborting the clip.
inline PhaseSequence extract_phase_sequence(const EnfComponent& enfc, int n_dft = 1 << 14) {
    const FrameConfig cfg = FrameConfig::make(enfc.sample_rate, enfc.nominal, n_dft);
    if (cfg.frame_count(enfc.samples.size()) == 0)
        throw TooShort("clip shorter than one analysis frame");

    const BandDft ctx(cfg);
    const std::vector<std::vector<double>> frames = frame_and_window(enfc.samples, cfg);
    const std::vector<double> deriv = derivative_signal(enfc.samples, enfc.sample_rate);
    const std::vector<std::vector<double>> dframes = frame_and_window(deriv, cfg);

    PhaseSequence seq;
    seq.cfg = cfg;
    const std::size_t count = frames.size();
    seq.psi0.resize(count);
    seq.psi1.resize(count);
    seq.freq1.resize(count);
    seq.flag.assign(count, 0);

    double last_psi0 = 0.0, last_psi1 = 0.0, last_f1 = static_cast<double>(cfg.nominal);
    for (std::size_t i = 0; i < count; ++i) {
        try {
            const BandSpectrum u = ctx.transform(frames[i]);
            const BandSpectrum du = ctx.transform(dframes[i]);
            const PeakInfo peak = dft0_peak(u, ctx);
            const double f1 = dft1_frequency(u, du, peak.k_peak, cfg);
            const double p1 = dft1_phase(du, f1, peak.psi0, cfg);
            last_psi0 = peak.psi0;
            last_f1 = f1;
            last_psi1 = p1;
        } catch (const Error&) {
            seq.flag[i] = 1;
        }
        seq.psi0[i] = last_psi0;
        seq.psi1[i] = last_psi1;
        seq.freq1[i] = last_f1;
    }
    return seq;
}

inline void write_phase_csv(const PhaseSequence& seq, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoFailure("cannot open for writing: " + path);
    os << "frame_index,time_s,psi0_rad,psi1_rad,freq1_hz,flag\n";
    char buf[128];
    for (std::size_t i = 0; i < seq.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%d\n", i,
                      seq.cfg.frame_time(static_cast<int>(i)), seq.psi0[i], seq.psi1[i],
                      seq.freq1[i], static_cast<int>(seq.flag[i]));
        os << buf;
    }
    if (!os) throw IoFailure("write error: " + path);
}

}  // namespace enft
