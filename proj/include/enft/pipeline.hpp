#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dsp.hpp"
#include "features.hpp"
#include "model.hpp"
#include "phase.hpp"
#include "synth.hpp"
#include "wav.hpp"

namespace enft {

// --- single-clip front end -------------------------------------------------

// Source recording at any rate down to the analysis chain: decimate to the
// nominal's analysis rate, isolate the mains component, estimate per-frame
// phase. Clips already at the analysis rate skip the resampler.
inline PhaseSequence clip_phase_sequence(const AudioClip& clip, int nominal,
                                         int n_dft = 1 << 14) {
    const int target = analysis_rate(nominal);
    const AudioClip& at_rate = clip;
    if (clip.sample_rate == target) {
        const EnfComponent enfc = bandpass_enfc(at_rate, nominal);
        return extract_phase_sequence(enfc, n_dft);
    }
    const AudioClip reduced = decimate(clip, target);
    const EnfComponent enfc = bandpass_enfc(reduced, nominal);
    return extract_phase_sequence(enfc, n_dft);
}

namespace detail {

// Deterministic parallel map: slot i gets body(i) regardless of scheduling,
// so corpus passes parallelize without disturbing reproducibility.
template <typename F>
inline void parallel_for(std::size_t n, F&& body) {
    const unsigned hw = std::thread::hardware_concurrency();
    const std::size_t workers = std::min<std::size_t>(hw ? hw : 1, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto run = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// --- corpus feature extraction ---------------------------------------------

struct FeatureEntry {
    std::string id;
    int label = 0;
    std::string split;
    int len = 0;  // phase-sequence length before framing
    std::string path_p;  // relative to the feature directory
    std::string path_x;
    bool skipped = false;
};

struct FeatureManifest {
    int nominal = 50;
    int n = 0;
    int p_n = 0;
    int f_n = 0;
    int max_len = 0;
    std::vector<FeatureEntry> clips;
};

inline void save_feature_manifest(const std::string& path, const FeatureManifest& m) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["nominal"] = m.nominal;
    j["n"] = m.n;
    j["p_n"] = m.p_n;
    j["f_n"] = m.f_n;
    j["max_len"] = m.max_len;
    j["clips"] = nlohmann::json::array();
    for (const FeatureEntry& e : m.clips)
        j["clips"].push_back({{"id", e.id},
                              {"label", e.label},
                              {"split", e.split},
                              {"len", e.len},
                              {"path_p", e.path_p},
                              {"path_x", e.path_x},
                              {"skipped", e.skipped}});
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open for writing: " + path);
    os << j.dump(2) << '\n';
    if (!os) throw IoFailure("write error: " + path);
}

inline FeatureManifest load_feature_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open feature manifest: " + path);
    nlohmann::json j;
    try {
        is >> j;
        FeatureManifest m;
        m.nominal = j.at("nominal").get<int>();
        m.n = j.at("n").get<int>();
        m.p_n = j.at("p_n").get<int>();
        m.f_n = j.at("f_n").get<int>();
        m.max_len = j.at("max_len").get<int>();
        for (const nlohmann::json& cj : j.at("clips")) {
            FeatureEntry e;
            e.id = cj.at("id").get<std::string>();
            e.label = cj.at("label").get<int>();
            e.split = cj.at("split").get<std::string>();
            e.len = cj.at("len").get<int>();
            e.path_p = cj.at("path_p").get<std::string>();
            e.path_x = cj.at("path_x").get<std::string>();
            e.skipped = cj.at("skipped").get<bool>();
            m.clips.push_back(std::move(e));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed feature manifest: ") + e.what());
    }
}

// Two passes over the corpus: first every clip's phase sequence (kept in
// memory — a corpus of hundreds of clips holds a few megabytes of phase),
// because the framing sizes depend on the corpus-wide maximum length; then
// framing and CSV dumps at the agreed sizes. A clip whose phase extraction
// fails is logged and marked skipped rather than failing the corpus.
// n_override forces the spatial side length; 0 derives it from the corpus.
inline FeatureManifest extract_corpus(const std::string& corpus_dir, int p_n,
                                      const std::string& out_dir, int n_override = 0) {
    if (p_n < 2) throw InvalidParams("temporal frame length p_n must be at least 2");
    namespace fs = std::filesystem;
    const CorpusManifest corpus =
        load_corpus_manifest((fs::path(corpus_dir) / "manifest.json").string());

    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "features", ec);
    if (ec) throw IoFailure("cannot create feature directory: " + out_dir);

    const std::size_t count = corpus.clips.size();
    std::vector<std::vector<double>> psi(count);
    std::vector<std::string> failure(count);
    detail::parallel_for(count, [&](std::size_t i) {
        const ClipRecord& rec = corpus.clips[i];
        try {
            const AudioClip clip =
                load_wav((fs::path(corpus_dir) / rec.path).string());
            const PhaseSequence seq = clip_phase_sequence(clip, corpus.config.nominal);
            psi[i] = seq.psi1;
        } catch (const Error& e) {
            failure[i] = e.what();
        }
    });

    FeatureManifest out;
    out.nominal = corpus.config.nominal;
    out.p_n = p_n;
    for (std::size_t i = 0; i < count; ++i)
        if (failure[i].empty())
            out.max_len = std::max(out.max_len, static_cast<int>(psi[i].size()));
    if (out.max_len == 0) throw DataError("no clip in the corpus yielded a phase sequence");
    out.n = n_override > 0 ? n_override : corpus_spatial_size(out.max_len);
    out.f_n = corpus_temporal_size(out.max_len, p_n);

    out.clips.resize(count);
    detail::parallel_for(count, [&](std::size_t i) {
        const ClipRecord& rec = corpus.clips[i];
        FeatureEntry e;
        e.id = rec.id;
        e.label = rec.label;
        e.split = rec.split;
        if (!failure[i].empty()) {
            e.skipped = true;
            out.clips[i] = std::move(e);
            return;
        }
        try {
            e.len = static_cast<int>(psi[i].size());
            e.path_p = "features/" + rec.id + "_P.csv";
            e.path_x = "features/" + rec.id + "_X.csv";
            const SpatialFeature P = spatial_features(psi[i], out.n);
            const TemporalFeature X = temporal_features(psi[i], out.p_n, out.f_n);
            write_matrix_csv((fs::path(out_dir) / e.path_p).string(), out.n, out.n,
                             P.m.data());
            write_matrix_csv((fs::path(out_dir) / e.path_x).string(), out.p_n, out.f_n,
                             X.m.data());
        } catch (const Error& err) {
            failure[i] = err.what();
            e = FeatureEntry{};
            e.id = rec.id;
            e.label = rec.label;
            e.split = rec.split;
            e.skipped = true;
        }
        out.clips[i] = std::move(e);
    });
    for (std::size_t i = 0; i < count; ++i)
        if (out.clips[i].skipped && !failure[i].empty())
            std::fprintf(stderr, "extract: skipping %s: %s\n",
                         corpus.clips[i].id.c_str(), failure[i].c_str());

    save_feature_manifest((fs::path(out_dir) / "feature_manifest.json").string(), out);
    return out;
}

// Load the framed features for one split ("train", "val", "test", or "all").
inline Dataset load_feature_dataset(const std::string& feature_dir,
                                    const FeatureManifest& manifest,
                                    const std::string& split) {
    namespace fs = std::filesystem;
    Dataset data;
    for (const FeatureEntry& e : manifest.clips) {
        if (e.skipped) continue;
        if (split != "all" && e.split != split) continue;
        const MatrixData p = load_matrix_csv((fs::path(feature_dir) / e.path_p).string());
        const MatrixData x = load_matrix_csv((fs::path(feature_dir) / e.path_x).string());
        if (p.rows != manifest.n || p.cols != manifest.n)
            throw DataError("spatial feature shape disagrees with the manifest: " + e.id);
        if (x.rows != manifest.p_n || x.cols != manifest.f_n)
            throw DataError("temporal feature shape disagrees with the manifest: " + e.id);
        LabeledExample ex;
        ex.P.n = p.rows;
        ex.P.m = p.v;
        ex.X.p_n = x.rows;
        ex.X.f_n = x.cols;
        ex.X.m = x.v;
        ex.label = e.label;
        data.push_back(std::move(ex));
    }
    return data;
}

}  // namespace enft
