#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"
#include "wav.hpp"

namespace enft {

// --- mains-frequency traces ------------------------------------------------

// Instantaneous mains frequency on a 0.1 s control grid. Values stay inside
// nominal +/- 0.5 Hz and neighbouring control points never differ by more
// than 0.02 Hz, so every trace is a plausible, continuous mains record.
struct EnfTrace {
    double nominal = 50.0;
    double step_s = 0.1;
    std::vector<double> inst_freq;
    std::uint64_t seed = 0;

    double duration() const {
        return inst_freq.size() < 2 ? 0.0
                                    : static_cast<double>(inst_freq.size() - 1) * step_s;
    }

    // linear interpolation between control points, clamped at the ends
    double freq_at(double t) const {
        if (inst_freq.empty()) return nominal;
        const double u = t / step_s;
        if (u <= 0.0) return inst_freq.front();
        const std::size_t k = static_cast<std::size_t>(u);
        if (k + 1 >= inst_freq.size()) return inst_freq.back();
        const double w = u - static_cast<double>(k);
        return inst_freq[k] * (1.0 - w) + inst_freq[k + 1] * w;
    }
};

namespace detail {

constexpr std::uint64_t kTraceTag = 0x74726163'65ULL;
constexpr std::uint64_t kNoiseTag = 0x6e6f6973'65ULL;

}  // namespace detail

// Bounded random walk around the nominal frequency. The walk starts within
// +/- 0.1 Hz of nominal and every 0.1 s step adds clamped gaussian drift, so
// the excursion and continuity bounds of EnfTrace hold by construction.
inline EnfTrace gen_enf_trace(double duration_s, double nominal, double drift_std,
                              std::uint64_t seed) {
    if (!(duration_s > 0.0)) throw InvalidParams("trace duration must be positive");
    if (!(nominal > 0.0)) throw InvalidParams("nominal frequency must be positive");
    if (drift_std < 0.0) throw InvalidParams("drift standard deviation cannot be negative");

    EnfTrace tr;
    tr.nominal = nominal;
    tr.seed = seed;
    const int points = static_cast<int>(std::ceil(duration_s / tr.step_s)) + 1;
    tr.inst_freq.reserve(static_cast<std::size_t>(points));

    Rng rng(mix_seed(seed, detail::kTraceTag));
    double f = nominal + rng.uniform(-0.1, 0.1);
    const double step_sd = drift_std * std::sqrt(tr.step_s);
    for (int k = 0; k < points; ++k) {
        tr.inst_freq.push_back(f);
        const double step = std::clamp(rng.gaussian(0.0, step_sd), -0.02, 0.02);
        f = std::clamp(f + step, nominal - 0.5, nominal + 0.5);
    }
    return tr;
}

// --- carrier synthesis -----------------------------------------------------

// Per-sample carrier phase in radians, by trapezoidal integration of the
// interpolated trace. Integrating frequency to phase guarantees the carrier
// is phase-continuous everywhere: the only discontinuities a clip can ever
// contain are the ones a tamper operation injects.
inline std::vector<double> carrier_phase(const EnfTrace& trace, int sample_rate,
                                         std::size_t n_samples) {
    if (sample_rate <= 0) throw InvalidRate("sample rate must be positive");
    std::vector<double> phi(n_samples);
    if (n_samples == 0) return phi;
    const double dt = 1.0 / sample_rate;
    double acc = 0.0;
    double f_prev = trace.freq_at(0.0);
    phi[0] = 0.0;
    for (std::size_t i = 1; i < n_samples; ++i) {
        const double f_cur = trace.freq_at(static_cast<double>(i) * dt);
        acc += std::numbers::pi * (f_prev + f_cur) * dt;  // 2*pi * mean(f) * dt
        phi[i] = acc;
        f_prev = f_cur;
    }
    return phi;
}

namespace detail {

// |X_k|^2 for bin k of the full-length DFT, via the Goertzel recurrence.
inline double goertzel_power(const std::vector<double>& x, std::size_t k) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k) /
                     static_cast<double>(x.size());
    const double coeff = 2.0 * std::cos(w);
    double s1 = 0.0, s2 = 0.0;
    for (const double v : x) {
        const double s0 = v + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    return s1 * s1 + s2 * s2 - coeff * s1 * s2;
}

}  // namespace detail

// Mean power of x inside [lo_hz, hi_hz], one-sided, scaled so a full-scale
// in-band tone of amplitude A reads close to A^2 / 2.
inline double band_power(const std::vector<double>& x, int sample_rate, double lo_hz,
                         double hi_hz) {
    if (x.empty()) throw InvalidParams("cannot measure the band power of an empty signal");
    const double n = static_cast<double>(x.size());
    const std::size_t k_lo =
        static_cast<std::size_t>(std::ceil(lo_hz * n / sample_rate));
    const std::size_t k_hi =
        static_cast<std::size_t>(std::floor(hi_hz * n / sample_rate));
    if (k_hi < k_lo || k_hi >= x.size() / 2)
        throw InvalidParams("band does not cover any analysable DFT bin");
    double p = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) p += detail::goertzel_power(x, k);
    return 2.0 * p / (n * n);
}

// Synthesize a recording: ENF carrier plus pink-and-white background noise,
// with the noise gain chosen so the power ratio inside the band
// [nominal - 1, nominal + 1] matches snr_db. The background stands in for
// speech; it keeps the corpus self-contained where real speech overlays
// would drag in redistribution questions.
inline AudioClip synth_recording(const EnfTrace& trace, int source_rate, double snr_db,
                                 std::uint64_t seed) {
    if (source_rate < 1000) throw InvalidParams("source rate must be at least 1000 Hz");
    if (snr_db < 0.0 || snr_db > 60.0)
        throw InvalidParams("band SNR must lie in [0, 60] dB");
    if (trace.inst_freq.size() < 2) throw InvalidParams("trace has no usable duration");

    const std::size_t n =
        static_cast<std::size_t>(std::llround(trace.duration() * source_rate));
    if (n == 0) throw InvalidParams("trace too short for one sample");

    constexpr double kCarrierAmp = 0.1;
    const std::vector<double> phi = carrier_phase(trace, source_rate, n);

    // Pink noise by Kellet's filter cascade over white gaussian input, mixed
    // 70/30 by power with a flat component so the spectrum is neither a pure
    // 1/f slope nor white.
    Rng rng(mix_seed(seed, detail::kNoiseTag));
    std::vector<double> pink(n), white(n);
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = rng.gaussian();
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        pink[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
        white[i] = rng.gaussian();
    }
    auto rms = [](const std::vector<double>& v) {
        double s = 0.0;
        for (const double x : v) s += x * x;
        return std::sqrt(s / static_cast<double>(v.size()));
    };
    const double pink_rms = rms(pink);
    const double white_rms = rms(white);
    std::vector<double> noise(n);
    for (std::size_t i = 0; i < n; ++i)
        noise[i] = std::sqrt(0.7) * pink[i] / pink_rms + std::sqrt(0.3) * white[i] / white_rms;

    // The carrier is a tone confined to nominal +/- 0.5 Hz, so its band power
    // is the analytic A^2 / 2 to well under 0.1 dB; only the noise needs the
    // measured treatment.
    const double p_sig = kCarrierAmp * kCarrierAmp / 2.0;
    const double p_noise =
        band_power(noise, source_rate, trace.nominal - 1.0, trace.nominal + 1.0);
    const double gain = std::sqrt(p_sig / (std::pow(10.0, snr_db / 10.0) * p_noise));

    AudioClip clip;
    clip.sample_rate = source_rate;
    clip.samples.resize(n);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        clip.samples[i] = kCarrierAmp * std::sin(phi[i]) + gain * noise[i];
        peak = std::max(peak, std::abs(clip.samples[i]));
    }
    // Common rescale keeps the band ratio intact while avoiding clipping in
    // the 16-bit container.
    if (peak > 0.99)
        for (double& s : clip.samples) s *= 0.99 / peak;
    return clip;
}

// --- tamper operations -----------------------------------------------------

enum class TamperOp { erase, insert, splice };

inline const char* tamper_op_name(TamperOp op) {
    switch (op) {
        case TamperOp::erase: return "delete";
        case TamperOp::insert: return "insert";
        case TamperOp::splice: return "splice";
    }
    return "?";
}

inline TamperOp tamper_op_from_name(const std::string& name) {
    if (name == "delete") return TamperOp::erase;
    if (name == "insert") return TamperOp::insert;
    if (name == "splice") return TamperOp::splice;
    throw ConfigError("unknown tamper operation: " + name);
}

// One edit applied to a clip. position/extent are seconds in the pre-tamper
// timeline; insert and splice additionally consume donor audio.
struct TamperSpec {
    TamperOp op = TamperOp::erase;
    double position_s = 0.0;
    double extent_s = 0.0;
    std::uint64_t donor_seed = 0;
};

namespace detail {

// 5 ms linear crossfade. The blend happens inside the edit window, replacing
// nothing outside it, so the timeline shift of the edit stays exactly the
// requested extent and the carrier phase step across the joint is preserved.
constexpr double kCrossfadeSeconds = 0.005;

inline void blend_append(std::vector<double>& out, const double* fade_out,
                         const double* fade_in, std::size_t len) {
    for (std::size_t u = 0; u < len; ++u) {
        const double w = (static_cast<double>(u) + 0.5) / static_cast<double>(len);
        out.push_back((1.0 - w) * fade_out[u] + w * fade_in[u]);
    }
}

}  // namespace detail

// Apply one edit. delete removes [position, position + extent) and abuts the
// remainder; insert adds donor audio at position; splice replaces the window
// with donor content of the same length. Donor clips for insert/splice must
// carry at least extent + 5 ms of samples at the clip's rate.
inline AudioClip apply_tamper(const AudioClip& clip, const TamperSpec& spec,
                              const AudioClip* donor = nullptr) {
    const int rate = clip.sample_rate;
    if (rate <= 0) throw InvalidRate("clip sample rate must be positive");
    if (spec.extent_s < 0.1) throw OutOfBounds("tamper extent below the 0.1 s minimum");
    const std::size_t len = clip.samples.size();
    const long pos_l = std::lround(spec.position_s * rate);
    const long ext_l = std::lround(spec.extent_s * rate);
    if (pos_l < 0 || ext_l <= 0 ||
        static_cast<std::size_t>(pos_l) + static_cast<std::size_t>(ext_l) > len)
        throw OutOfBounds("tamper window extends outside the clip");
    const std::size_t pos = static_cast<std::size_t>(pos_l);
    const std::size_t ext = static_cast<std::size_t>(ext_l);
    const std::size_t fade =
        static_cast<std::size_t>(std::lround(detail::kCrossfadeSeconds * rate));

    if (spec.op != TamperOp::erase) {
        if (donor == nullptr)
            throw MissingDonor("insert and splice require a donor clip");
        if (donor->sample_rate != rate)
            throw MissingDonor("donor sample rate differs from the clip");
        if (donor->samples.size() < ext + fade)
            throw OutOfBounds("donor shorter than extent plus the crossfade");
    }

    const double* s = clip.samples.data();
    AudioClip out;
    out.sample_rate = rate;

    switch (spec.op) {
        case TamperOp::erase: {
            out.samples.reserve(len - ext);
            out.samples.insert(out.samples.end(), s, s + pos);
            const std::size_t f = std::min(fade, len - pos - ext);
            detail::blend_append(out.samples, s + pos, s + pos + ext, f);
            out.samples.insert(out.samples.end(), s + pos + ext + f, s + len);
            break;
        }
        case TamperOp::insert: {
            const double* d = donor->samples.data();
            out.samples.reserve(len + ext);
            out.samples.insert(out.samples.end(), s, s + pos);
            // host fades out into the donor, donor fades out into the host
            // resuming at position, so nothing of the host is lost
            const std::size_t f1 = std::min(fade, len - pos);
            detail::blend_append(out.samples, s + pos, d, f1);
            out.samples.insert(out.samples.end(), d + f1, d + ext);
            const std::size_t f2 = std::min(fade, len - pos);
            detail::blend_append(out.samples, d + ext, s + pos, f2);
            out.samples.insert(out.samples.end(), s + pos + f2, s + len);
            break;
        }
        case TamperOp::splice: {
            const double* d = donor->samples.data();
            out.samples.reserve(len);
            out.samples.insert(out.samples.end(), s, s + pos);
            const std::size_t f1 = std::min(fade, ext);
            detail::blend_append(out.samples, s + pos, d, f1);
            out.samples.insert(out.samples.end(), d + f1, d + ext);
            const std::size_t f2 = std::min(fade, len - pos - ext);
            detail::blend_append(out.samples, d + ext, s + pos + ext, f2);
            out.samples.insert(out.samples.end(), s + pos + ext + f2, s + len);
            break;
        }
    }
    return out;
}

// --- corpus assembly -------------------------------------------------------

struct CorpusConfig {
    std::string out_dir;
    int edited = 60;
    int original = 40;
    double duration_lo = 9.0;
    double duration_hi = 35.0;
    double snr_lo = 15.0;
    double snr_hi = 30.0;
    int nominal = 50;
    int source_rate = 8000;
    double drift_std = 0.01;       // Hz per sqrt(second)
    double adversarial_frac = 0.1; // share of edited clips with a near-zero step
    double train_frac = 0.64;
    double val_frac = 0.16;
    std::uint64_t seed = 1;

    void validate() const {
        if (out_dir.empty()) throw InvalidParams("corpus output directory not set");
        if (edited < 10 || original < 10)
            throw InvalidParams("corpus needs at least 10 clips per class");
        if (!(duration_lo >= 5.0) || !(duration_hi >= duration_lo) || duration_hi > 60.0)
            throw InvalidParams("clip duration range must satisfy 5 <= lo <= hi <= 60");
        if (snr_lo < 0.0 || snr_hi > 60.0 || snr_lo > snr_hi)
            throw InvalidParams("SNR range must satisfy 0 <= lo <= hi <= 60");
        if (nominal != 50 && nominal != 60)
            throw InvalidParams("nominal frequency must be 50 or 60 Hz");
        if (source_rate < 1000) throw InvalidParams("source rate must be at least 1000 Hz");
        if (!(drift_std > 0.0)) throw InvalidParams("drift_std must be positive");
        if (adversarial_frac < 0.0 || adversarial_frac > 1.0)
            throw InvalidParams("adversarial fraction must lie in [0, 1]");
        if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac >= 1.0)
            throw InvalidParams("split fractions must leave room for a test share");
    }
};

// One corpus entry. position/extent/steps describe the applied tamper where
// present; synth_duration is the pre-tamper length, so the untampered twin of
// any clip can be regenerated from (trace_seed, noise_seed, synth_duration).
struct ClipRecord {
    std::string id;
    std::string path;  // relative to the corpus directory
    int label = 0;     // 0 original, 1 edited
    double duration = 0.0;
    double snr_db = 0.0;
    double synth_duration = 0.0;
    std::uint64_t trace_seed = 0;
    std::uint64_t noise_seed = 0;
    bool has_tamper = false;
    TamperSpec tamper;
    std::uint64_t donor_noise_seed = 0;
    double donor_duration = 0.0;
    bool adversarial = false;
    std::vector<double> steps;  // wrapped carrier-phase steps at each joint
    std::string split;          // train / val / test
};

struct CorpusManifest {
    CorpusConfig config;
    int f_d = 0;  // analysis rate the extraction stage will decimate to
    std::vector<ClipRecord> clips;
};

inline int analysis_rate(int nominal) {
    if (nominal == 50) return 1000;
    if (nominal == 60) return 1200;
    throw InvalidParams("nominal frequency must be 50 or 60 Hz");
}

namespace detail {

inline double wrap_pi(double a) {
    a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
    if (a < 0.0) a += 2.0 * std::numbers::pi;
    return a - std::numbers::pi;
}

// Smallest circular distance between two wrapped angles.
inline double ang_dist(double a, double b) { return std::abs(wrap_pi(a - b)); }

// Scan candidate indices in [lo, hi] and return the one whose step value
// (as reported by eval) lands closest to the wrapped target.
template <typename F>
std::size_t scan_for_step(std::size_t lo, std::size_t hi, double target, F&& eval) {
    std::size_t best = lo;
    double best_d = ang_dist(eval(lo), target);
    for (std::size_t i = lo + 1; i <= hi; ++i) {
        const double d = ang_dist(eval(i), target);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

constexpr std::uint64_t kClipTag = 0x636c6970ULL;
constexpr std::uint64_t kHostTraceTag = 0x686f7374ULL;
constexpr std::uint64_t kHostNoiseTag = 0x686e6f69ULL;
constexpr std::uint64_t kDonorTraceTag = 0x646f6e6fULL;
constexpr std::uint64_t kDonorNoiseTag = 0x646e6f69ULL;
constexpr std::uint64_t kSplitTag = 0x73706c69'74ULL;

}  // namespace detail

// JSON shapes for the manifest. Keys are stable and doubles serialize
// shortest-round-trip, so identical corpora produce identical bytes.
inline nlohmann::json corpus_config_to_json(const CorpusConfig& c) {
    return {{"out_dir", c.out_dir},
            {"edited", c.edited},
            {"original", c.original},
            {"duration_lo", c.duration_lo},
            {"duration_hi", c.duration_hi},
            {"snr_lo", c.snr_lo},
            {"snr_hi", c.snr_hi},
            {"nominal", c.nominal},
            {"source_rate", c.source_rate},
            {"drift_std", c.drift_std},
            {"adversarial_frac", c.adversarial_frac},
            {"train_frac", c.train_frac},
            {"val_frac", c.val_frac},
            {"seed", c.seed}};
}

inline CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
    CorpusConfig c;
    c.out_dir = j.at("out_dir").get<std::string>();
    c.edited = j.at("edited").get<int>();
    c.original = j.at("original").get<int>();
    c.duration_lo = j.at("duration_lo").get<double>();
    c.duration_hi = j.at("duration_hi").get<double>();
    c.snr_lo = j.at("snr_lo").get<double>();
    c.snr_hi = j.at("snr_hi").get<double>();
    c.nominal = j.at("nominal").get<int>();
    c.source_rate = j.at("source_rate").get<int>();
    c.drift_std = j.at("drift_std").get<double>();
    c.adversarial_frac = j.at("adversarial_frac").get<double>();
    c.train_frac = j.at("train_frac").get<double>();
    c.val_frac = j.at("val_frac").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline nlohmann::json clip_record_to_json(const ClipRecord& r) {
    nlohmann::json j{{"id", r.id},
                     {"path", r.path},
                     {"label", r.label == 1 ? "edited" : "original"},
                     {"duration", r.duration},
                     {"snr_db", r.snr_db},
                     {"synth_duration", r.synth_duration},
                     {"trace_seed", r.trace_seed},
                     {"noise_seed", r.noise_seed},
                     {"split", r.split}};
    if (r.has_tamper) {
        j["tamper"] = {{"op", tamper_op_name(r.tamper.op)},
                       {"position", r.tamper.position_s},
                       {"extent", r.tamper.extent_s},
                       {"donor_trace_seed", r.tamper.donor_seed},
                       {"donor_noise_seed", r.donor_noise_seed},
                       {"donor_duration", r.donor_duration},
                       {"adversarial", r.adversarial},
                       {"steps", r.steps}};
    } else {
        j["tamper"] = nullptr;
    }
    return j;
}

inline ClipRecord clip_record_from_json(const nlohmann::json& j) {
    ClipRecord r;
    r.id = j.at("id").get<std::string>();
    r.path = j.at("path").get<std::string>();
    const std::string label = j.at("label").get<std::string>();
    if (label != "edited" && label != "original")
        throw DataError("clip label must be 'edited' or 'original'");
    r.label = label == "edited" ? 1 : 0;
    r.duration = j.at("duration").get<double>();
    r.snr_db = j.at("snr_db").get<double>();
    r.synth_duration = j.at("synth_duration").get<double>();
    r.trace_seed = j.at("trace_seed").get<std::uint64_t>();
    r.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    r.split = j.at("split").get<std::string>();
    const nlohmann::json& t = j.at("tamper");
    if (!t.is_null()) {
        r.has_tamper = true;
        r.tamper.op = tamper_op_from_name(t.at("op").get<std::string>());
        r.tamper.position_s = t.at("position").get<double>();
        r.tamper.extent_s = t.at("extent").get<double>();
        r.tamper.donor_seed = t.at("donor_trace_seed").get<std::uint64_t>();
        r.donor_noise_seed = t.at("donor_noise_seed").get<std::uint64_t>();
        r.donor_duration = t.at("donor_duration").get<double>();
        r.adversarial = t.at("adversarial").get<bool>();
        r.steps = t.at("steps").get<std::vector<double>>();
    }
    if (r.has_tamper != (r.label == 1))
        throw DataError("clip label inconsistent with tamper record: " + r.id);
    return r;
}

inline void save_corpus_manifest(const std::string& path, const CorpusManifest& m) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config"] = corpus_config_to_json(m.config);
    j["f_d"] = m.f_d;
    j["clips"] = nlohmann::json::array();
    for (const ClipRecord& r : m.clips) j["clips"].push_back(clip_record_to_json(r));
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open for writing: " + path);
    os << j.dump(2) << '\n';
    if (!os) throw IoFailure("write error: " + path);
}

inline CorpusManifest load_corpus_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open corpus manifest: " + path);
    nlohmann::json j;
    try {
        is >> j;
        CorpusManifest m;
        m.config = corpus_config_from_json(j.at("config"));
        m.f_d = j.at("f_d").get<int>();
        for (const nlohmann::json& cj : j.at("clips"))
            m.clips.push_back(clip_record_from_json(cj));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed corpus manifest: ") + e.what());
    }
}

namespace detail {

// Plan and apply one tamper so the wrapped carrier-phase step at a joint
// lands on its target. Candidate cut points are scanned at sample granularity
// (one sample moves the step by 2*pi*nominal/rate, about 0.04 rad), which is
// fine enough for the step windows the corpus draws from.
//
// Which joints are controllable differs by operation. A delete has one joint,
// driven by the extent. An insert has two independent knobs: the donor entry
// offset sets the entry joint and the extent sets the exit joint, because the
// host resumes at the same sample it left. A splice's exit joint is NOT
// controllable: sliding the extent moves host and donor phase together, so
// the exit step changes only at 2*pi*(f_host - f_donor)/rate per sample --
// near zero for two traces at the same nominal. The splice entry joint is
// targeted and its exit step is recorded as achieved.
struct PlannedTamper {
    AudioClip clip;          // tampered audio
    TamperSpec spec;         // as applied (extent adjusted by the planner)
    std::vector<double> steps;
};

inline PlannedTamper plan_tamper(const AudioClip& host, const EnfTrace& host_trace,
                                 TamperOp op, double pos_s, double extent_goal_s,
                                 const std::vector<double>& targets,
                                 const AudioClip* donor, const EnfTrace* donor_trace) {
    const int rate = host.sample_rate;
    const std::size_t period = static_cast<std::size_t>(
        std::lround(static_cast<double>(rate) / host_trace.nominal));
    const std::size_t fade = static_cast<std::size_t>(std::lround(kCrossfadeSeconds * rate));
    const std::size_t pos = static_cast<std::size_t>(std::lround(pos_s * rate));
    const std::size_t ext0 = static_cast<std::size_t>(std::lround(extent_goal_s * rate));
    const std::vector<double> hphi = carrier_phase(host_trace, rate, host.samples.size());

    PlannedTamper out;
    out.spec.op = op;
    out.spec.position_s = static_cast<double>(pos) / rate;

    if (op == TamperOp::erase) {
        auto step_at = [&](std::size_t e) { return wrap_pi(hphi[pos + e] - hphi[pos]); };
        const std::size_t e =
            scan_for_step(ext0 - period, ext0 + period, targets.at(0), step_at);
        out.spec.extent_s = static_cast<double>(e) / rate;
        out.steps = {step_at(e)};
        out.clip = apply_tamper(host, out.spec, nullptr);
        return out;
    }

    const std::vector<double> dphi =
        carrier_phase(*donor_trace, rate, donor->samples.size());
    // joint A compares the donor's entry phase against the host at the cut
    const std::size_t o_lo = static_cast<std::size_t>(std::lround(0.2 * rate));
    auto step_a = [&](std::size_t o) { return wrap_pi(dphi[o] - hphi[pos]); };
    const std::size_t o = scan_for_step(o_lo, o_lo + 2 * period, targets.at(0), step_a);

    // joint B compares the host's resume phase against the donor's exit phase
    auto step_b = [&](std::size_t e) {
        const double host_resume = op == TamperOp::insert ? hphi[pos] : hphi[pos + e];
        return wrap_pi(host_resume - dphi[o + e]);
    };
    const std::size_t e =
        op == TamperOp::insert
            ? scan_for_step(ext0 - period, ext0 + period, targets.at(1), step_b)
            : ext0;
    out.spec.extent_s = static_cast<double>(e) / rate;
    out.steps = {step_a(o), step_b(e)};

    AudioClip donor_view;
    donor_view.sample_rate = rate;
    donor_view.samples.assign(donor->samples.begin() + static_cast<long>(o),
                              donor->samples.begin() + static_cast<long>(o + e + fade));
    out.clip = apply_tamper(host, out.spec, &donor_view);
    return out;
}

}  // namespace detail

// Synthesize a full labeled corpus under cfg.out_dir: WAV files plus a JSON
// manifest. Every decision flows from cfg.seed, so the same config always
// reproduces the corpus byte for byte. Splits are stratified by label,
// tamper operation and the adversarial flag in roughly 64/16/20 shares.
inline CorpusManifest build_corpus(const CorpusConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    const fs::path root(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(root / "wav", ec);
    if (ec) throw IoFailure("cannot create corpus directory: " + root.string());

    CorpusManifest manifest;
    manifest.config = cfg;
    manifest.f_d = analysis_rate(cfg.nominal);

    const int total = cfg.edited + cfg.original;
    const double pi = std::numbers::pi;
    for (int i = 0; i < total; ++i) {
        const int label = i < cfg.edited ? 1 : 0;
        Rng plan(mix_seed(mix_seed(cfg.seed, detail::kClipTag), static_cast<std::uint64_t>(i)));

        ClipRecord rec;
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "clip_%04d", i);
        rec.id = idbuf;
        rec.path = std::string("wav/") + rec.id + ".wav";
        rec.label = label;
        rec.snr_db = plan.uniform(cfg.snr_lo, cfg.snr_hi);
        rec.trace_seed =
            mix_seed(mix_seed(cfg.seed, detail::kHostTraceTag), static_cast<std::uint64_t>(i));
        rec.noise_seed =
            mix_seed(mix_seed(cfg.seed, detail::kHostNoiseTag), static_cast<std::uint64_t>(i));

        // leave margin so planner adjustments of up to one carrier period
        // keep the final duration inside the configured range
        const double final_target =
            cfg.duration_hi - cfg.duration_lo > 0.2
                ? plan.uniform(cfg.duration_lo + 0.1, cfg.duration_hi - 0.1)
                : 0.5 * (cfg.duration_lo + cfg.duration_hi);

        AudioClip produced;
        if (label == 0) {
            rec.synth_duration = final_target;
            const EnfTrace tr =
                gen_enf_trace(rec.synth_duration, cfg.nominal, cfg.drift_std, rec.trace_seed);
            produced = synth_recording(tr, cfg.source_rate, rec.snr_db, rec.noise_seed);
        } else {
            rec.has_tamper = true;
            rec.adversarial = cfg.adversarial_frac > 0.0 && plan.bernoulli(cfg.adversarial_frac);
            // adversarial clips use the delete construction, whose single
            // joint can be driven to a near-invisible wrapped step
            const double op_draw = plan.uniform();
            TamperOp op = rec.adversarial           ? TamperOp::erase
                          : op_draw < (1.0 / 3.0)   ? TamperOp::erase
                          : op_draw < (2.0 / 3.0)   ? TamperOp::insert
                                                    : TamperOp::splice;
            // cap the extent so a cut point with 2 s of context on each side
            // always exists, even for the shortest admissible clips
            const double extent_goal =
                plan.uniform(0.3, std::min(1.2, final_target - 4.4));
            const double pos_s = plan.uniform(2.0, final_target - extent_goal - 2.0);
            // The step floor keeps tampers detectable at the bottom of the
            // SNR range: below ~1 rad a step sinks under the phase noise of
            // a 15-20 dB clip, which would poison the training labels.
            auto draw_step = [&]() {
                const double mag = plan.uniform(1.2, pi - 0.6);
                return plan.bernoulli(0.5) ? mag : -mag;
            };
            std::vector<double> targets;
            if (rec.adversarial)
                targets = {0.0};
            else if (op == TamperOp::insert)
                targets = {draw_step(), draw_step()};
            else
                targets = {draw_step()};

            const double host_dur = op == TamperOp::erase  ? final_target + extent_goal
                                    : op == TamperOp::insert ? final_target - extent_goal
                                                             : final_target;
            rec.synth_duration = host_dur;
            const EnfTrace host_tr =
                gen_enf_trace(host_dur, cfg.nominal, cfg.drift_std, rec.trace_seed);
            const AudioClip host =
                synth_recording(host_tr, cfg.source_rate, rec.snr_db, rec.noise_seed);

            AudioClip donor;
            EnfTrace donor_tr;
            if (op != TamperOp::erase) {
                rec.tamper.donor_seed = mix_seed(mix_seed(cfg.seed, detail::kDonorTraceTag),
                                                 static_cast<std::uint64_t>(i));
                rec.donor_noise_seed = mix_seed(mix_seed(cfg.seed, detail::kDonorNoiseTag),
                                                static_cast<std::uint64_t>(i));
                rec.donor_duration = extent_goal + 1.0;
                donor_tr = gen_enf_trace(rec.donor_duration, cfg.nominal, cfg.drift_std,
                                         rec.tamper.donor_seed);
                donor = synth_recording(donor_tr, cfg.source_rate, rec.snr_db,
                                        rec.donor_noise_seed);
            }
            detail::PlannedTamper planned = detail::plan_tamper(
                host, host_tr, op, pos_s, extent_goal, targets,
                op == TamperOp::erase ? nullptr : &donor,
                op == TamperOp::erase ? nullptr : &donor_tr);
            planned.spec.donor_seed = rec.tamper.donor_seed;
            rec.tamper = planned.spec;
            rec.steps = planned.steps;
            produced = std::move(planned.clip);
        }

        rec.duration = produced.duration();
        save_wav((root / rec.path).string(), produced);
        manifest.clips.push_back(std::move(rec));
    }

    // stratified splits: shuffle each stratum and hand out 64/16/20 shares
    auto stratum_of = [](const ClipRecord& r) {
        if (r.label == 0) return std::string("orig");
        return std::string(tamper_op_name(r.tamper.op)) + (r.adversarial ? "/adv" : "");
    };
    std::vector<std::string> strata;
    for (const ClipRecord& r : manifest.clips) {
        const std::string s = stratum_of(r);
        if (std::find(strata.begin(), strata.end(), s) == strata.end()) strata.push_back(s);
    }
    Rng split_rng(mix_seed(cfg.seed, detail::kSplitTag));
    for (const std::string& s : strata) {
        std::vector<int> members;
        for (int i = 0; i < total; ++i)
            if (stratum_of(manifest.clips[static_cast<std::size_t>(i)]) == s)
                members.push_back(i);
        split_rng.shuffle(members);
        const std::size_t n = members.size();
        const std::size_t n_train =
            static_cast<std::size_t>(std::lround(cfg.train_frac * static_cast<double>(n)));
        const std::size_t n_val =
            static_cast<std::size_t>(std::lround(cfg.val_frac * static_cast<double>(n)));
        for (std::size_t k = 0; k < n; ++k) {
            ClipRecord& r = manifest.clips[static_cast<std::size_t>(members[k])];
            r.split = k < n_train ? "train" : (k < n_train + n_val ? "val" : "test");
        }
    }

    save_corpus_manifest((root / "manifest.json").string(), manifest);
    return manifest;
}

}  // namespace enft
