#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "enft/phase.hpp"
#include "enft/rng.hpp"
#include "test_support.hpp"

using namespace enft;
using std::numbers::pi;

namespace {

std::vector<double> make_cosine(double freq, double fs, std::size_t n, double phase) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::cos(2.0 * pi * freq * static_cast<double>(i) / fs + phase);
    return x;
}

// Phase of the cosine at the start of frame i.
double frame_start_phase(double freq, double fs, const FrameConfig& cfg, std::size_t i,
                         double phase) {
    return testsup::wrap_angle(phase +
                               2.0 * pi * freq * static_cast<double>(i * cfg.hop) / fs);
}

struct FrameEstimates {
    std::vector<double> psi0, psi1, freq1;
};

// Run the full per-frame estimator chain on a clean signal.
FrameEstimates estimate_frames(const std::vector<double>& x, const FrameConfig& cfg,
                               const BandDft& ctx) {
    const auto frames = frame_and_window(x, cfg);
    const auto dframes = frame_and_window(derivative_signal(x, cfg.sample_rate), cfg);
    FrameEstimates est;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const BandSpectrum u = ctx.transform(frames[i]);
        const BandSpectrum du = ctx.transform(dframes[i]);
        const PeakInfo peak = dft0_peak(u, ctx);
        const double f1 = dft1_frequency(u, du, peak.k_peak, cfg);
        est.psi0.push_back(peak.psi0);
        est.psi1.push_back(dft1_phase(du, f1, peak.psi0, cfg));
        est.freq1.push_back(f1);
    }
    return est;
}

}  // namespace

TEST(PhaseWrap, WrapStaysInHalfOpenInterval) {
    EXPECT_DOUBLE_EQ(wrap_phase(0.1), 0.1);
    EXPECT_DOUBLE_EQ(wrap_phase(3.0 * pi), pi);
    EXPECT_DOUBLE_EQ(wrap_phase(-pi), pi);
    EXPECT_NEAR(wrap_phase(2.0 * pi + 0.3), 0.3, 1e-12);
    EXPECT_NEAR(wrap_phase(-2.0 * pi - 0.3), -0.3, 1e-12);
    for (double a = -20.0; a < 20.0; a += 0.37) {
        const double w = wrap_phase(a);
        EXPECT_GT(w, -pi);
        EXPECT_LE(w, pi);
        EXPECT_NEAR(std::remainder(w - a, 2.0 * pi), 0.0, 1e-9);
    }
}

TEST(PhaseWrap, UnwrapRecoversLinearRamp) {
    std::vector<double> wrapped, truth;
    for (int i = 0; i < 40; ++i) {
        truth.push_back(0.5 * i);
        wrapped.push_back(wrap_phase(0.5 * i));
    }
    const std::vector<double> u = unwrap_phases(wrapped);
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(u[i], truth[i], 1e-9);
}

TEST(FrameGeometry, DerivedQuantities) {
    const FrameConfig c60 = FrameConfig::make(1200, 60);
    EXPECT_EQ(c60.hop, 20);
    EXPECT_EQ(c60.frame_len, 200);
    EXPECT_EQ(c60.n_dft, 1 << 14);
    // 30 s of signal at 1200 Hz
    EXPECT_EQ(c60.frame_count(36000), 1791);
    EXPECT_EQ(c60.frame_count(199), 0);
    EXPECT_EQ(c60.frame_count(200), 1);
    EXPECT_EQ(c60.frame_count(219), 1);
    EXPECT_EQ(c60.frame_count(220), 2);
    // each hop advances by exactly one mains cycle
    EXPECT_NEAR(c60.hop_seconds(), 1.0 / 60.0, 1e-15);
    EXPECT_NEAR(c60.frame_time(10) - c60.frame_time(0), 10.0 / 60.0, 1e-12);
    EXPECT_NEAR(c60.frame_time(0), (200.0 - 1.0) / 2.0 / 1200.0, 1e-15);
    EXPECT_NEAR(c60.bin_hz(c60.hz_bin(60.37)), 60.37, 1e-12);
    EXPECT_DOUBLE_EQ(c60.band_lo(), 50.0);
    EXPECT_DOUBLE_EQ(c60.band_hi(), 70.0);

    const FrameConfig c50 = FrameConfig::make(1000, 50);
    EXPECT_EQ(c50.hop, 20);
    EXPECT_EQ(c50.frame_len, 200);
    EXPECT_DOUBLE_EQ(c50.band_lo(), 40.0);
    EXPECT_DOUBLE_EQ(c50.band_hi(), 60.0);

    EXPECT_THROW(FrameConfig::make(8000, 60), InvalidRate);
    EXPECT_THROW(FrameConfig::make(1200, 55), InvalidBand);
    EXPECT_THROW(FrameConfig::make(1200, 60, 4097), ConfigError);  // not a power of two
    EXPECT_THROW(FrameConfig::make(1200, 60, 128), ConfigError);   // shorter than a frame
}

TEST(FrameGeometry, WindowAndFraming) {
    const std::vector<double> w = hann_window(200);
    EXPECT_DOUBLE_EQ(w[0], 0.0);
    EXPECT_NEAR(w[199], 0.0, 1e-15);
    double sum = 0.0;
    for (int n = 0; n < 200; ++n) {
        EXPECT_NEAR(w[static_cast<std::size_t>(n)], w[static_cast<std::size_t>(199 - n)], 1e-15);
        sum += w[static_cast<std::size_t>(n)];
    }
    // closed form: 0.5*N - 0.5*sum cos = 0.5*200 - 0.5*1
    EXPECT_NEAR(sum, 99.5, 1e-12);

    const FrameConfig cfg = FrameConfig::make(1200, 60);
    std::vector<double> ramp(240);
    for (std::size_t n = 0; n < ramp.size(); ++n) ramp[n] = static_cast<double>(n);
    const auto frames = frame_and_window(ramp, cfg);
    ASSERT_EQ(frames.size(), 3u);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        ASSERT_EQ(frames[i].size(), 200u);
        for (int n : {1, 57, 198})
            EXPECT_DOUBLE_EQ(frames[i][static_cast<std::size_t>(n)],
                             static_cast<double>(i * 20 + static_cast<std::size_t>(n)) *
                                 w[static_cast<std::size_t>(n)]);
    }

    EXPECT_THROW(frame_and_window(std::vector<double>(100, 1.0), cfg), TooShort);
}

TEST(Derivative, MatchesMidpointDerivative) {
    const double f0 = 60.0, fs = 1200.0;
    const std::vector<double> x = testsup::make_sine(f0, fs, 2.0);
    const std::vector<double> d = derivative_signal(x, 1200);
    ASSERT_EQ(d.size(), x.size());
    EXPECT_DOUBLE_EQ(d[0], 0.0);
    // the first difference tracks the derivative sampled between the two
    // samples it spans
    double err = 0.0, ref = 0.0;
    for (std::size_t n = 1; n < x.size(); ++n) {
        const double want =
            2.0 * pi * f0 * std::cos(2.0 * pi * f0 * (static_cast<double>(n) - 0.5) / fs);
        err += (d[n] - want) * (d[n] - want);
        ref += want * want;
    }
    const double rel = std::sqrt(err / ref);
    EXPECT_LT(rel, 0.015);
    EXPECT_LT(rel, 0.006);  // measured 0.0041
}

TEST(Dft0, BinCenteredMatchesClosedForm) {
    const FrameConfig cfg = FrameConfig::make(1200, 60);
    const BandDft ctx(cfg);
    const int k = 820;
    const double f0 = cfg.bin_hz(k);  // 60.05859375 Hz
    for (double phase : {0.0, pi / 4.0}) {
        const std::vector<double> x = make_cosine(f0, 1200.0, 4000, phase);
        const auto frames = frame_and_window(x, cfg);
        const BandSpectrum u = ctx.transform(frames[0]);
        const PeakInfo peak = dft0_peak(u, ctx);
        EXPECT_EQ(peak.k_peak, k);
        // independent closed-form evaluation of the windowed cosine DFT
        const double w0 = 2.0 * pi * f0 / 1200.0;
        const double wk = 2.0 * pi * k / cfg.n_dft;
        const std::complex<double> oracle =
            testsup::hann_cosine_dft(cfg.frame_len, w0, phase, wk);
        EXPECT_NEAR(peak.psi0, std::arg(oracle), 1e-9);  // measured ~1e-15
        // against the true phase the residual is window leakage of the
        // negative-frequency image, a few 1e-6 even on a bin center
        EXPECT_LT(testsup::circular_dist(peak.psi0, phase), 2e-5);
    }
}

TEST(Dft0, ZeroSignalThrowsNoPeak) {
    const FrameConfig cfg = FrameConfig::make(1200, 60);
    const BandDft ctx(cfg);
    const BandSpectrum u =
        ctx.transform(std::vector<double>(static_cast<std::size_t>(cfg.frame_len), 0.0));
    EXPECT_THROW(dft0_peak(u, ctx), NoPeak);
}

TEST(Dft1, BinCenteredFrequencyAndPhase) {
    const FrameConfig cfg = FrameConfig::make(1200, 60);
    const BandDft ctx(cfg);
    const double f0 = cfg.bin_hz(820);
    for (double phase : {0.0, pi / 4.0}) {
        const std::vector<double> x = make_cosine(f0, 1200.0, 4000, phase);
        const auto frames = frame_and_window(x, cfg);
        const auto dframes = frame_and_window(derivative_signal(x, 1200), cfg);
        const BandSpectrum u = ctx.transform(frames[0]);
        const BandSpectrum du = ctx.transform(dframes[0]);
        const PeakInfo peak = dft0_peak(u, ctx);
        const double f1 = dft1_frequency(u, du, peak.k_peak, cfg);
        EXPECT_NEAR(f1, f0, 2e-3);  // measured |err| ~1e-3
        const double p1 = dft1_phase(du, f1, peak.psi0, cfg);
        // both estimators see the same leakage; they agree to well under a
        // milliradian scale on a bin-centered tone (measured ~6e-4)
        EXPECT_LT(testsup::circular_dist(p1, peak.psi0), 1e-3);
    }
}

TEST(Dft1, OffBinBeatsCoarseEstimate) {
    const FrameConfig cfg = FrameConfig::make(1200, 60);
    const BandDft ctx(cfg);
    const double f0 = 59.95, phase = 0.7;
    const std::vector<double> x = make_cosine(f0, 1200.0, 4000, phase);
    const FrameEstimates est = estimate_frames(x, cfg, ctx);
    ASSERT_EQ(est.psi1.size(), 191u);

    int wins = 0;
    double sum_e0 = 0.0, sum_e1 = 0.0;
    for (std::size_t i = 0; i < est.psi1.size(); ++i) {
        EXPECT_NEAR(est.freq1[i], f0, 2e-3);  // measured max err 1.3e-3
        const double truth = frame_start_phase(f0, 1200.0, cfg, i, phase);
        const double e0 = testsup::circular_dist(est.psi0[i], truth);
        const double e1 = testsup::circular_dist(est.psi1[i], truth);
        sum_e0 += e0;
        sum_e1 += e1;
        if (e1 < e0) ++wins;
    }
    const double n = static_cast<double>(est.psi1.size());
    // measured: win rate 1.00, mean refined error 5.5e-4 vs coarse 1.8e-2
    EXPECT_GE(static_cast<double>(wins) / n, 0.9);
    EXPECT_LT(sum_e1 / n, 1e-3);
    EXPECT_GT(sum_e0 / n, 5e-3);
    EXPECT_LT(sum_e1, sum_e0);
}

TEST(Dft1, SweepStaysWithinTolerance) {
    const FrameConfig cfg = FrameConfig::make(1200, 60);
    const BandDft ctx(cfg);
    double worst_f = 0.0, sum_e0 = 0.0, sum_e1 = 0.0;
    long total = 0;
    for (int t = 0; t < 10; ++t) {
        const double f0 = 59.5 + (t + 0.5) / 10.0 + 0.00123;  // never bin-centered
        const double phase = 0.3 + 0.5 * t;
        const std::vector<double> x = make_cosine(f0, 1200.0, 2400, phase);
        const FrameEstimates est = estimate_frames(x, cfg, ctx);
        for (std::size_t i = 0; i < est.psi1.size(); ++i) {
            worst_f = std::max(worst_f, std::abs(est.freq1[i] - f0));
            const double truth = frame_start_phase(f0, 1200.0, cfg, i, phase);
            sum_e0 += testsup::circular_dist(est.psi0[i], truth);
            sum_e1 += testsup::circular_dist(est.psi1[i], truth);
            ++total;
        }
    }
    EXPECT_LT(worst_f, 0.005);  // measured 3.9e-3 across the full band sweep
    EXPECT_LT(sum_e1, sum_e0);  // refined phase beats the coarse one on average
    EXPECT_LT(sum_e1 / static_cast<double>(total), 1e-3);
}

TEST(Dft1, BranchSelection) {
    EXPECT_NEAR(pick_phase_branch(0.3, 0.25), 0.3, 1e-15);
    // raw phase half a turn off from the coarse estimate flips to the branch
    // nearest the coarse value
    EXPECT_NEAR(pick_phase_branch(0.3 - pi, 0.25), 0.3, 1e-12);
    EXPECT_NEAR(pick_phase_branch(0.3, -2.7), wrap_phase(0.3 + pi), 1e-12);
}

TEST(Dft1, ErrorPaths) {
    const FrameConfig cfg = FrameConfig::make(1200, 60);
    const BandDft ctx(cfg);
    const std::vector<double> x = make_cosine(60.0, 1200.0, 400, 0.2);
    const auto frames = frame_and_window(x, cfg);
    const BandSpectrum u = ctx.transform(frames[0]);
    const PeakInfo peak = dft0_peak(u, ctx);

    // wrong frame length
    EXPECT_THROW(ctx.transform(std::vector<double>(100, 0.0)), ShapeMismatch);
    // peak index outside the computed band
    const auto dframes = frame_and_window(derivative_signal(x, 1200), cfg);
    const BandSpectrum du = ctx.transform(dframes[0]);
    EXPECT_THROW(dft1_frequency(u, du, 10, cfg), ShapeMismatch);
    // vanishing plain spectrum under the ratio
    const BandSpectrum zero =
        ctx.transform(std::vector<double>(static_cast<std::size_t>(cfg.frame_len), 0.0));
    EXPECT_THROW(dft1_frequency(zero, du, peak.k_peak, cfg), NoPeak);
    // a difference spectrum far too large pushes the ratio out of the band
    std::vector<double> dboost = derivative_signal(x, 1200);
    for (double& v : dboost) v *= 1000.0;
    const BandSpectrum du_big = ctx.transform(frame_and_window(dboost, cfg)[0]);
    EXPECT_THROW(dft1_frequency(u, du_big, peak.k_peak, cfg), DegeneratePeak);
    // interpolation needs live bins at the refined frequency
    EXPECT_THROW(dft1_phase(zero, 60.0, 0.0, cfg), InterpolationFailure);
    EXPECT_THROW(dft1_phase(du, 80.0, 0.0, cfg), InterpolationFailure);  // outside band
}

TEST(Sequence, ConstantTonePhaseProgression) {
    const double f0 = 60.2;
    EnfComponent enfc;
    enfc.sample_rate = 1200;
    enfc.nominal = 60;
    enfc.half_bandwidth = 1.0;
    enfc.samples = make_cosine(f0, 1200.0, 4800, 1.1);
    const PhaseSequence seq = extract_phase_sequence(enfc);
    ASSERT_EQ(seq.size(), 231u);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        EXPECT_EQ(seq.flag[i], 0);
        EXPECT_NEAR(seq.freq1[i], f0, 0.005);
    }
    // frame-to-frame phase advance of a steady tone: one hop is one nominal
    // cycle, so only the off-nominal part remains after wrapping
    const double step = 2.0 * pi * (f0 - 60.0) / 60.0;
    const std::vector<double> u = unwrap_phases(seq.psi1);
    for (std::size_t i = 1; i < u.size(); ++i) EXPECT_NEAR(u[i] - u[i - 1], step, 1e-3);
}

TEST(Sequence, PhaseStepAtSpliceIsLocalized) {
    const FrameConfig cfg = FrameConfig::make(1200, 60);
    for (double delta : {2.0, -1.2}) {
        const double f0 = 60.0, phase = 0.4;
        const std::size_t cut = 2400;
        std::vector<double> x = make_cosine(f0, 1200.0, 4800, phase);
        for (std::size_t n = cut; n < x.size(); ++n)
            x[n] = std::cos(2.0 * pi * f0 * static_cast<double>(n) / 1200.0 + phase + delta);

        EnfComponent enfc{x, 1200, 60, 1.0};
        const PhaseSequence seq = extract_phase_sequence(enfc);
        const std::vector<double> u = unwrap_phases(seq.psi1);
        const std::vector<char> stable = testsup::stable_frame_mask(seq.freq1, seq.flag);
        const std::vector<double> jump = testsup::step_profile(u, stable);

        // frames whose window mixes the two sides report wild frequencies and
        // must be masked out; everything clear of the cut must survive
        const int boundary = static_cast<int>(cut) / cfg.hop;
        int masked = 0;
        for (int i = boundary - 9; i < boundary; ++i)
            if (!stable[static_cast<std::size_t>(i)]) ++masked;
        EXPECT_GE(masked, 5);
        for (int i = 0; i < boundary - 12; ++i) EXPECT_TRUE(stable[static_cast<std::size_t>(i)]);
        for (int i = boundary + 3; i < static_cast<int>(seq.size()); ++i)
            EXPECT_TRUE(stable[static_cast<std::size_t>(i)]);

        // the profile reads the analytic step at the cut boundary...
        EXPECT_NEAR(jump[static_cast<std::size_t>(boundary)], delta, 0.1 * std::abs(delta));
        // ...the global maximum sits at the cut and reads the step height...
        int j_star = 0;
        for (std::size_t j = 1; j < jump.size(); ++j)
            if (std::abs(jump[j]) > std::abs(jump[static_cast<std::size_t>(j_star)]))
                j_star = static_cast<int>(j);
        EXPECT_LE(std::abs(j_star - boundary), 12);
        EXPECT_NEAR(jump[static_cast<std::size_t>(j_star)], delta, 0.1 * std::abs(delta));
        // ...and nothing step-like appears anywhere else
        for (std::size_t j = 0; j < jump.size(); ++j)
            if (std::abs(static_cast<int>(j) - boundary) > 25)
                EXPECT_LT(std::abs(jump[j]), 0.5 * std::abs(delta))
                    << "spurious step at frame " << j;
    }
}

TEST(Sequence, CarryForwardFlagsBadFrames) {
    EnfComponent enfc;
    enfc.sample_rate = 1200;
    enfc.nominal = 60;
    enfc.half_bandwidth = 1.0;
    enfc.samples = make_cosine(60.0, 1200.0, 4800, 0.9);
    std::fill(enfc.samples.begin() + 2000, enfc.samples.begin() + 2600, 0.0);

    const PhaseSequence seq = extract_phase_sequence(enfc);
    ASSERT_EQ(seq.size(), 231u);
    // frames wholly inside the silent gap cannot produce an estimate
    for (int i = 100; i <= 120; ++i) EXPECT_EQ(seq.flag[static_cast<std::size_t>(i)], 1);
    // frames wholly outside it must
    for (int i = 0; i <= 90; ++i) EXPECT_EQ(seq.flag[static_cast<std::size_t>(i)], 0);
    for (int i = 130; i < 231; ++i) EXPECT_EQ(seq.flag[static_cast<std::size_t>(i)], 0);

    // flagged frames repeat the last successful estimate
    int last_good = 99;
    while (seq.flag[static_cast<std::size_t>(last_good)] == 1) --last_good;
    for (int i = 100; i <= 120; ++i) {
        EXPECT_EQ(seq.psi1[static_cast<std::size_t>(i)],
                  seq.psi1[static_cast<std::size_t>(last_good)]);
        EXPECT_EQ(seq.freq1[static_cast<std::size_t>(i)],
                  seq.freq1[static_cast<std::size_t>(last_good)]);
    }
}

TEST(Sequence, TooShortThrows) {
    EnfComponent enfc{std::vector<double>(150, 0.0), 1200, 60, 1.0};
    EXPECT_THROW(extract_phase_sequence(enfc), TooShort);
}

TEST(Sequence, CsvRoundTripsExactDoubles) {
    EnfComponent enfc{make_cosine(60.13, 1200.0, 400, 0.5), 1200, 60, 1.0};
    const PhaseSequence seq = extract_phase_sequence(enfc);
    ASSERT_EQ(seq.size(), 11u);

    testsup::TempDir tmp("phase_csv");
    const std::string path = tmp.file("phase.csv");
    write_phase_csv(seq, path);

    std::ifstream is(path);
    ASSERT_TRUE(is.good());
    std::string line;
    ASSERT_TRUE(std::getline(is, line));
    EXPECT_EQ(line, "frame_index,time_s,psi0_rad,psi1_rad,freq1_hz,flag");
    std::size_t i = 0;
    while (std::getline(is, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        std::size_t idx;
        double t, p0, p1, f1;
        int flag;
        ASSERT_TRUE(ss >> idx >> t >> p0 >> p1 >> f1 >> flag);
        EXPECT_EQ(idx, i);
        // 17 significant digits round-trip doubles exactly
        EXPECT_EQ(t, seq.cfg.frame_time(static_cast<int>(i)));
        EXPECT_EQ(p0, seq.psi0[i]);
        EXPECT_EQ(p1, seq.psi1[i]);
        EXPECT_EQ(f1, seq.freq1[i]);
        EXPECT_EQ(flag, static_cast<int>(seq.flag[i]));
        ++i;
    }
    EXPECT_EQ(i, seq.size());
}

TEST(Sequence, EstimatesStayInRange) {
    Rng rng(20240817);
    for (int trial = 0; trial < 5; ++trial) {
        const double f0 = rng.uniform(59.2, 60.8);
        const double phase = rng.uniform(-pi, pi);
        EnfComponent enfc;
        enfc.sample_rate = 1200;
        enfc.nominal = 60;
        enfc.half_bandwidth = 1.0;
        enfc.samples = make_cosine(f0, 1200.0, 1200, phase);
        for (double& v : enfc.samples) v += 0.01 * rng.gaussian();

        const PhaseSequence seq = extract_phase_sequence(enfc);
        std::size_t good = 0;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (seq.flag[i]) continue;
            ++good;
            EXPECT_GE(seq.freq1[i], seq.cfg.band_lo());
            EXPECT_LE(seq.freq1[i], seq.cfg.band_hi());
            EXPECT_GT(seq.psi1[i], -pi);
            EXPECT_LE(seq.psi1[i], pi);
            EXPECT_GT(seq.psi0[i], -pi);
            EXPECT_LE(seq.psi0[i], pi);
        }
        EXPECT_GE(static_cast<double>(good), 0.95 * static_cast<double>(seq.size()));
    }
}
