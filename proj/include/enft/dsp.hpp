#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <vector>

#include "enft/errors.hpp"
#include "enft/wav.hpp"

namespace enft {

// Narrowband mains-frequency component at the analysis rate, carrying the
// band description the later stages need.
struct EnfComponent {
    std::vector<double> samples;
    int sample_rate = 0;    // 1000 or 1200
    int nominal = 0;        // 50 or 60
    double half_bandwidth = 1.0;
};

namespace detail {

inline double bessel_i0(double x) {
    // power series; converges quickly for the beta values used here
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (static_cast<double>(k) * k);
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

// Kaiser-windowed sinc lowpass. cutoff is in cycles/sample of the rate the
// filter runs at; n_taps odd so the delay (n_taps-1)/2 is integral.
inline std::vector<double> kaiser_lowpass(int n_taps, double cutoff, double beta) {
    std::vector<double> h(static_cast<std::size_t>(n_taps));
    const double mid = (n_taps - 1) / 2.0;
    const double i0b = bessel_i0(beta);
    for (int i = 0; i < n_taps; ++i) {
        const double t = i - mid;
        const double sinc = t == 0.0 ? 2.0 * cutoff
                                     : std::sin(2.0 * std::numbers::pi * cutoff * t) /
                                           (std::numbers::pi * t);
        const double r = 2.0 * static_cast<double>(i) / (n_taps - 1) - 1.0;
        const double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
        h[static_cast<std::size_t>(i)] = sinc * w;
    }
    return h;
}

}  // namespace detail

// Rate conversion by a rational factor L/M with one linear-phase anti-alias
// lowpass at the upsampled rate. The group delay is compensated so output
// sample m sits at input time m*M/L; edits in the signal keep their position.
inline AudioClip decimate(const AudioClip& clip, int target_rate) {
    if (clip.sample_rate <= 0) throw InvalidRate("source rate must be positive");
    if (target_rate <= 0 || target_rate >= clip.sample_rate)
        throw InvalidRate("target rate must be positive and below the source rate");

    const int g = std::gcd(target_rate, clip.sample_rate);
    const long L = target_rate / g;
    const long M = clip.sample_rate / g;
    const double fs_up = static_cast<double>(clip.sample_rate) * static_cast<double>(L);

    // 60 dB stopband starting at target/2, passband edge at 0.4*target
    const double atten = 60.0;
    const double beta = 0.1102 * (atten - 8.7);
    const double trans = 0.1 * target_rate;
    int n_taps = static_cast<int>(std::ceil(
        (atten - 7.95) / (2.285 * 2.0 * std::numbers::pi * trans / fs_up)));
    if (n_taps % 2 == 0) ++n_taps;
    const double cutoff = 0.45 * target_rate / fs_up;
    const std::vector<double> h = detail::kaiser_lowpass(n_taps, cutoff, beta);

    const long delay = (n_taps - 1) / 2;
    const long n_in = static_cast<long>(clip.samples.size());
    const long n_out = (n_in * L) / M;  // floor of full-coverage count

    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(static_cast<std::size_t>(std::max(0l, n_out)));
    for (long m = 0; m < n_out; ++m) {
        // upsampled index of this output, filter centered via the delay term
        const long c = m * M + delay;
        // x_up is nonzero only at multiples of L: j = c - n*L must be in [0, n_taps)
        long n_lo = (c - (n_taps - 1) + L - 1) / L;  // ceil
        long n_hi = c / L;
        n_lo = std::max(n_lo, 0l);
        n_hi = std::min(n_hi, n_in - 1);
        double acc = 0.0;
        for (long n = n_lo; n <= n_hi; ++n)
            acc += clip.samples[static_cast<std::size_t>(n)] * h[static_cast<std::size_t>(c - n * L)];
        out.samples[static_cast<std::size_t>(m)] = acc * static_cast<double>(L);
    }
    return out;
}

// One second-order section; direct form II transposed.
struct Biquad {
    double b0 = 0, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

    void apply(std::vector<double>& x) const {
        double s1 = 0.0, s2 = 0.0;
        for (double& v : x) {
            const double y = b0 * v + s1;
            s1 = b1 * v - a1 * y + s2;
            s2 = b2 * v - a2 * y;
            v = y;
        }
    }

    std::complex<double> response(double w) const {
        const std::complex<double> z1 = std::polar(1.0, -w);
        const std::complex<double> z2 = z1 * z1;
        return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
    }
};

inline double cascade_magnitude(const std::vector<Biquad>& sos, double w) {
    double m = 1.0;
    for (const Biquad& b : sos) m *= std::abs(b.response(w));
    return m;
}

// Butterworth bandpass of order four (two sections) via the analog prototype
// and the bilinear transform, unity gain pinned at center_hz.
inline std::vector<Biquad> butter_bandpass(double lo_hz, double hi_hz, double center_hz,
                                           double fs) {
    using cd = std::complex<double>;
    if (!(lo_hz > 0.0 && hi_hz > lo_hz && hi_hz < fs / 2.0))
        throw InvalidBand("bandpass edges must satisfy 0 < lo < hi < fs/2");
    const double k = 2.0 * fs;
    const double w1 = k * std::tan(std::numbers::pi * lo_hz / fs);
    const double w2 = k * std::tan(std::numbers::pi * hi_hz / fs);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;

    // second-order Butterworth prototype poles
    const cd proto[2] = {cd(-std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0),
                         cd(-std::numbers::sqrt2 / 2.0, -std::numbers::sqrt2 / 2.0)};
    std::vector<cd> zpoles;
    for (const cd& p : proto) {
        const cd pb = p * bw;
        const cd disc = std::sqrt(pb * pb - 4.0 * w0sq);
        for (const cd s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) {
            const cd z = (k + s) / (k - s);
            if (std::abs(z) >= 1.0) throw InvalidBand("unstable bandpass design");
            if (z.imag() > 0.0) zpoles.push_back(z);
        }
    }
    if (zpoles.size() != 2) throw InvalidBand("degenerate bandpass design");

    std::vector<Biquad> sos(2);
    for (int i = 0; i < 2; ++i) {
        sos[static_cast<std::size_t>(i)] = Biquad{1.0, 0.0, -1.0,  // zeros at z = +1 and z = -1
                                                  -2.0 * zpoles[static_cast<std::size_t>(i)].real(),
                                                  std::norm(zpoles[static_cast<std::size_t>(i)])};
    }
    const double wc = 2.0 * std::numbers::pi * center_hz / fs;
    const double gain = 1.0 / cascade_magnitude(sos, wc);
    sos[0].b0 *= gain;
    sos[0].b1 *= gain;
    sos[0].b2 *= gain;
    return sos;
}

// Forward-backward filtering with odd-reflection padding at both ends, so the
// result has zero phase shift and small edge transients.
inline std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                                    std::size_t pad) {
    if (x.empty()) return {};
    pad = std::min(pad, x.size() - 1);
    std::vector<double> ext;
    ext.reserve(x.size() + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x.front() - x[pad - i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 2 - i]);

    for (const Biquad& b : sos) b.apply(ext);
    std::reverse(ext.begin(), ext.end());
    for (const Biquad& b : sos) b.apply(ext);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + static_cast<long>(pad),
                               ext.begin() + static_cast<long>(pad + x.size()));
}

// Isolate the mains component around the nominal frequency. The -3 dB width
// is set wider than the passband spec so that after the forward-backward
// pass the band [nominal - half_bandwidth, nominal + half_bandwidth] stays
// within 0.5 dB while nominal +/- 10 Hz is down by more than 40 dB.
inline EnfComponent bandpass_enfc(const AudioClip& clip, int nominal, double half_bandwidth = 1.0) {
    if (clip.sample_rate != 1000 && clip.sample_rate != 1200)
        throw InvalidRate("bandpass expects an analysis rate of 1000 or 1200 Hz");
    if (nominal != 50 && nominal != 60) throw InvalidBand("nominal frequency must be 50 or 60 Hz");
    if (!(half_bandwidth > 0.0) || half_bandwidth > 5.0)
        throw InvalidBand("half bandwidth must be in (0, 5] Hz");

    // Geometric-symmetric -3 dB edges, wide enough that the squared response
    // stays inside 0.5 dB across the requested band.
    const double w3db = 2.2 * half_bandwidth;
    const double f_hi = w3db + std::sqrt(w3db * w3db + static_cast<double>(nominal) * nominal);
    const double f_lo = f_hi - 2.0 * w3db;
    const std::vector<Biquad> sos = butter_bandpass(f_lo, f_hi, nominal, clip.sample_rate);
    const std::size_t pad = static_cast<std::size_t>(clip.sample_rate / 2);  // ~0.5 s of ring-out

    EnfComponent out;
    out.samples = filtfilt(sos, clip.samples, pad);
    out.sample_rate = clip.sample_rate;
    out.nominal = nominal;
    out.half_bandwidth = half_bandwidth;
    return out;
}

}  // namespace enft
