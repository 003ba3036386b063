// Command-line front end: corpus synthesis, feature extraction, training,
// evaluation, single-file detection, and the frame-length study. Results go
// to files; stdout carries exactly one summary line per successful command.
//
// Exit codes: 0 success, 2 usage or configuration error (bad flags, bad
// config values, unreadable locations), 3 data error (malformed or unusable
// content discovered while processing).
//
// When ENFF_RUN_DIR is set the process switches into it first, so every
// relative path — inputs, outputs, even --config — resolves under the run
// directory and artifacts stay portable across machines.
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "enft/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

int exit_code_for(const enft::Error& e) {
    if (dynamic_cast<const enft::ConfigError*>(&e) != nullptr ||
        dynamic_cast<const enft::InvalidParams*>(&e) != nullptr ||
        dynamic_cast<const enft::IoFailure*>(&e) != nullptr ||
        dynamic_cast<const enft::InvalidRate*>(&e) != nullptr ||
        dynamic_cast<const enft::InvalidBand*>(&e) != nullptr ||
        dynamic_cast<const enft::ShapeMismatch*>(&e) != nullptr)
        return 2;
    return 3;
}

// Persist the effective key=value configuration (defaults included) next to
// the artifacts the command produced.
void echo_config(const CLI::App& sub, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const std::string path = (fs::path(out_dir) / "effective_config.ini").string();
    std::ofstream os(path, std::ios::trunc);
    if (!os || !(os << sub.config_to_str(true, false)))
        throw enft::IoFailure("cannot write config echo: " + path);
}

// The long ablation name has an obvious short form people will reach for.
enft::Variant parse_variant(std::string name) {
    if (name == "no_attention") name = "no_attention_concat";
    return enft::variant_from_name(name);
}

// --- synth -------------------------------------------------------------------

struct SynthOpts {
    std::string out = "corpus";
    enft::CorpusConfig cfg;
};

void run_synth(const SynthOpts& o, const CLI::App& sub) {
    enft::CorpusConfig cfg = o.cfg;
    cfg.out_dir = o.out;
    cfg.validate();
    const enft::CorpusManifest m = enft::build_corpus(cfg);
    echo_config(sub, o.out);
    std::printf("synth: %zu clips -> %s\n", m.clips.size(), o.out.c_str());
}

// --- extract -----------------------------------------------------------------

struct ExtractOpts {
    std::string corpus = "corpus";
    std::string out = "features";
    int p_n = 85;
    int n_override = 0;
};

void run_extract(const ExtractOpts& o, const CLI::App& sub) {
    const enft::FeatureManifest fm =
        enft::extract_corpus(o.corpus, o.p_n, o.out, o.n_override);
    echo_config(sub, o.out);
    std::size_t skipped = 0;
    for (const enft::FeatureEntry& e : fm.clips) skipped += e.skipped ? 1 : 0;
    std::printf("extract: %zu clips (%zu skipped), n=%d p_n=%d f_n=%d -> %s\n",
                fm.clips.size(), skipped, fm.n, fm.p_n, fm.f_n, o.out.c_str());
}

// --- train -------------------------------------------------------------------

struct TrainOpts {
    std::string features = "features";
    std::string out = "model";
    std::string variant = "full";
    int epochs = 300;
    int batch = 64;
    double lr = 0.001;
    int patience = 30;
    double dropout = 0.2;
    unsigned long long seed = 1;
};

void run_train(const TrainOpts& o, const CLI::App& sub) {
    enft::TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch;
    tc.lr = o.lr;
    tc.patience = o.patience;
    tc.seed = o.seed;
    tc.validate();
    const enft::Variant variant = parse_variant(o.variant);

    const enft::FeatureManifest fm = enft::load_feature_manifest(
        (fs::path(o.features) / "feature_manifest.json").string());
    enft::ModelConfig mc;
    mc.n = fm.n;
    mc.p_n = fm.p_n;
    mc.f_n = fm.f_n;
    mc.dropout_rate = o.dropout;
    mc.seed = o.seed;
    mc.validate();

    const enft::Dataset train_set = enft::load_feature_dataset(o.features, fm, "train");
    const enft::Dataset val_set = enft::load_feature_dataset(o.features, fm, "val");

    enft::Model model(mc, variant);
    const enft::TrainResult r = enft::train(model, train_set, val_set, tc);

    std::error_code ec;
    fs::create_directories(o.out, ec);
    enft::save_model(model, (fs::path(o.out) / "model.bin").string());
    enft::write_history_csv((fs::path(o.out) / "history.csv").string(), r.history);
    echo_config(sub, o.out);
    std::printf("train: best epoch %d val_accuracy %.4f -> %s\n", r.best_epoch,
                r.best_val_accuracy, o.out.c_str());
}

// --- eval --------------------------------------------------------------------

struct EvalOpts {
    std::string features = "features";
    std::string model = "model/model.bin";
    std::string out = "eval";
    std::string split = "test";
    std::string variant;  // set -> self-contained ablation run instead
    int epochs = 300;
    int batch = 64;
    double lr = 0.001;
    int patience = 30;
    unsigned long long seed = 1;
};

void run_eval(const EvalOpts& o, const CLI::App& sub) {
    const enft::FeatureManifest fm = enft::load_feature_manifest(
        (fs::path(o.features) / "feature_manifest.json").string());
    enft::Metrics metrics;
    std::string what;
    if (!o.variant.empty()) {
        // Ablation harness: train the requested variant on a stratified
        // 64/16/20 resplit of the whole corpus, then score its test share.
        enft::TrainConfig tc;
        tc.epochs = o.epochs;
        tc.batch_size = o.batch;
        tc.lr = o.lr;
        tc.patience = o.patience;
        tc.seed = o.seed;
        tc.validate();
        enft::ModelConfig mc;
        mc.n = fm.n;
        mc.p_n = fm.p_n;
        mc.f_n = fm.f_n;
        mc.seed = o.seed;
        const enft::Dataset all = enft::load_feature_dataset(o.features, fm, "all");
        metrics = enft::ablation_run(all, parse_variant(o.variant), mc, tc);
        what = "variant " + o.variant;
    } else {
        if (o.split != "train" && o.split != "val" && o.split != "test" && o.split != "all")
            throw enft::ConfigError("unknown split: " + o.split);
        const enft::Model model = enft::load_model(o.model);
        if (model.config().n != fm.n || model.config().p_n != fm.p_n ||
            model.config().f_n != fm.f_n)
            throw enft::ConfigError("model and feature manifest disagree on feature sizes");
        const enft::Dataset ds = enft::load_feature_dataset(o.features, fm, o.split);
        metrics = enft::evaluate(model, ds);
        what = "split " + o.split;
    }
    std::error_code ec;
    fs::create_directories(o.out, ec);
    enft::write_metrics_json((fs::path(o.out) / "metrics.json").string(), metrics);
    echo_config(sub, o.out);
    std::printf("eval: %s accuracy %.4f -> %s\n", what.c_str(), metrics.accuracy,
                o.out.c_str());
}

// --- detect ------------------------------------------------------------------

struct DetectOpts {
    std::string wav;
    std::string model = "model/model.bin";
    std::string features = "features";
    std::string out = "detect";
};

void run_detect(const DetectOpts& o, const CLI::App& sub) {
    const enft::Model model = enft::load_model(o.model);
    const enft::FeatureManifest fm = enft::load_feature_manifest(
        (fs::path(o.features) / "feature_manifest.json").string());
    if (model.config().n != fm.n || model.config().p_n != fm.p_n ||
        model.config().f_n != fm.f_n)
        throw enft::ConfigError("model and feature manifest disagree on feature sizes");

    const enft::AudioClip clip = enft::load_wav(o.wav);
    const enft::PhaseSequence seq = enft::clip_phase_sequence(clip, fm.nominal);
    const enft::SpatialFeature P = enft::spatial_features(seq.psi1, fm.n);
    const enft::TemporalFeature X = enft::temporal_features(seq.psi1, fm.p_n, fm.f_n);
    const std::array<double, 2> p = model.predict(P, X);
    const char* verdict = p[1] > p[0] ? "edited" : "original";

    std::error_code ec;
    fs::create_directories(o.out, ec);
    enft::write_phase_csv(seq, (fs::path(o.out) / "phase.csv").string());
    nlohmann::json v;
    v["wav"] = o.wav;
    v["frames"] = seq.size();
    v["probabilities"] = {p[0], p[1]};
    v["verdict"] = verdict;
    v["phase_csv"] = "phase.csv";
    const std::string vpath = (fs::path(o.out) / "verdict.json").string();
    std::ofstream os(vpath, std::ios::trunc);
    if (!os || !(os << v.dump(2) << "\n"))
        throw enft::IoFailure("cannot write verdict: " + vpath);
    echo_config(sub, o.out);
    std::printf("detect: %s p_edited %.4f -> %s\n", verdict, p[1], o.out.c_str());
}

// --- study -------------------------------------------------------------------

struct StudyOpts {
    std::string corpus = "corpus";
    std::string out = "study";
    int epochs = 300;
    int batch = 64;
    double lr = 0.001;
    int patience = 30;
    unsigned long long seed = 1;
};

void run_study(const StudyOpts& o, const CLI::App& sub) {
    // One controlled variable: everything below shares the corpus and the
    // seed; only the temporal frame length changes between rows.
    static constexpr int kFrameLengths[] = {15, 25, 35, 45, 55, 65, 75, 85, 95};

    enft::TrainConfig tc;
    tc.epochs = o.epochs;
    tc.batch_size = o.batch;
    tc.lr = o.lr;
    tc.patience = o.patience;
    tc.seed = o.seed;
    tc.validate();

    std::error_code ec;
    fs::create_directories(o.out, ec);
    const std::string csv_path = (fs::path(o.out) / "study.csv").string();
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw enft::IoFailure("cannot open study output: " + csv_path);
    csv << "frame_length_s,p_n,f_n,accuracy\n";

    for (const int p_n : kFrameLengths) {
        const std::string sub_out =
            (fs::path(o.out) / ("pn_" + std::to_string(p_n))).string();
        const enft::FeatureManifest fm = enft::extract_corpus(o.corpus, p_n, sub_out);
        enft::ModelConfig mc;
        mc.n = fm.n;
        mc.p_n = fm.p_n;
        mc.f_n = fm.f_n;
        mc.seed = o.seed;
        enft::Model model(mc, enft::Variant::full);
        enft::train(model, enft::load_feature_dataset(sub_out, fm, "train"),
                    enft::load_feature_dataset(sub_out, fm, "val"), tc);
        const enft::Metrics mt =
            enft::evaluate(model, enft::load_feature_dataset(sub_out, fm, "test"));
        char row[128];
        // ten phase points per 0.17 s of signal -> 0.017 s per point
        std::snprintf(row, sizeof row, "%.3f,%d,%d,%.17g\n", 0.017 * p_n, p_n, fm.f_n,
                      mt.accuracy);
        csv << row;
    }
    if (!csv) throw enft::IoFailure("failed writing study output: " + csv_path);
    csv.close();
    echo_config(sub, o.out);
    std::printf("study: 9 rows -> %s\n", csv_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* run_dir = std::getenv("ENFF_RUN_DIR"); run_dir != nullptr && *run_dir) {
        std::error_code ec;
        fs::create_directories(run_dir, ec);
        fs::current_path(run_dir, ec);
        if (ec) {
            std::fprintf(stderr, "enft: cannot enter run directory %s: %s\n", run_dir,
                         ec.message().c_str());
            return 2;
        }
    }

    CLI::App app{"mains-hum phase analysis for audio tampering detection"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from an INI file (one section per subcommand)");

    SynthOpts so;
    CLI::App* synth = app.add_subcommand("synth", "generate a labeled corpus of tampered and pristine recordings")->configurable();
    synth->add_option("--out", so.out, "corpus output directory")->capture_default_str();
    synth->add_option("--edited", so.cfg.edited, "number of tampered clips")->capture_default_str();
    synth->add_option("--original", so.cfg.original, "number of pristine clips")->capture_default_str();
    synth->add_option("--duration-lo", so.cfg.duration_lo, "shortest clip, seconds")->capture_default_str();
    synth->add_option("--duration-hi", so.cfg.duration_hi, "longest clip, seconds")->capture_default_str();
    synth->add_option("--snr-lo", so.cfg.snr_lo, "lowest in-band SNR, dB")->capture_default_str();
    synth->add_option("--snr-hi", so.cfg.snr_hi, "highest in-band SNR, dB")->capture_default_str();
    synth->add_option("--nominal", so.cfg.nominal, "mains frequency, 50 or 60 Hz")->capture_default_str();
    synth->add_option("--source-rate", so.cfg.source_rate, "recording sample rate, Hz")->capture_default_str();
    synth->add_option("--drift-std", so.cfg.drift_std, "frequency walk scale, Hz per sqrt(second)")->capture_default_str();
    synth->add_option("--adversarial-frac", so.cfg.adversarial_frac, "share of tampers cut at whole-cycle extents")->capture_default_str();
    synth->add_option("--train-frac", so.cfg.train_frac, "training share of the split")->capture_default_str();
    synth->add_option("--val-frac", so.cfg.val_frac, "validation share of the split")->capture_default_str();
    synth->add_option("--seed", so.cfg.seed, "corpus seed")->capture_default_str();

    ExtractOpts xo;
    CLI::App* extract = app.add_subcommand("extract", "turn a corpus into framed phase features")->configurable();
    extract->add_option("--corpus", xo.corpus, "corpus directory (with manifest.json)")->capture_default_str();
    extract->add_option("--out", xo.out, "feature output directory")->capture_default_str();
    extract->add_option("--pn", xo.p_n, "phase points per temporal frame")->capture_default_str();
    extract->add_option("--n", xo.n_override, "spatial side override (0 = derive from the corpus)")->capture_default_str();

    TrainOpts to;
    CLI::App* train = app.add_subcommand("train", "train the tamper classifier on extracted features")->configurable();
    train->add_option("--features", to.features, "feature directory")->capture_default_str();
    train->add_option("--out", to.out, "model output directory")->capture_default_str();
    train->add_option("--variant", to.variant, "full, cnn_only, bilstm_only, or no_attention_concat")->capture_default_str();
    train->add_option("--epochs", to.epochs, "epoch budget")->capture_default_str();
    train->add_option("--batch", to.batch, "mini-batch size")->capture_default_str();
    train->add_option("--lr", to.lr, "Adam learning rate")->capture_default_str();
    train->add_option("--patience", to.patience, "early-stop patience in epochs (0 disables)")->capture_default_str();
    train->add_option("--dropout", to.dropout, "dropout rate in the classifier head")->capture_default_str();
    train->add_option("--seed", to.seed, "weight init, shuffle, and dropout seed")->capture_default_str();

    EvalOpts eo;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a trained model, or run one ablation variant end to end")->configurable();
    eval_cmd->add_option("--features", eo.features, "feature directory")->capture_default_str();
    eval_cmd->add_option("--model", eo.model, "trained model file")->capture_default_str();
    eval_cmd->add_option("--split", eo.split, "train, val, test, or all")->capture_default_str();
    eval_cmd->add_option("--out", eo.out, "metrics output directory")->capture_default_str();
    eval_cmd->add_option("--variant", eo.variant, "train and score this variant on a fresh stratified resplit instead of loading --model");
    eval_cmd->add_option("--epochs", eo.epochs, "epoch budget (--variant mode)")->capture_default_str();
    eval_cmd->add_option("--batch", eo.batch, "mini-batch size (--variant mode)")->capture_default_str();
    eval_cmd->add_option("--lr", eo.lr, "Adam learning rate (--variant mode)")->capture_default_str();
    eval_cmd->add_option("--patience", eo.patience, "early-stop patience (--variant mode)")->capture_default_str();
    eval_cmd->add_option("--seed", eo.seed, "training seed (--variant mode)")->capture_default_str();

    DetectOpts dopt;
    CLI::App* detect = app.add_subcommand("detect", "full pipeline on one recording: verdict plus phase trace")->configurable();
    detect->add_option("wav", dopt.wav, "recording to examine")->required();
    detect->add_option("--model", dopt.model, "trained model file")->capture_default_str();
    detect->add_option("--features", dopt.features, "feature directory the model was trained from")->capture_default_str();
    detect->add_option("--out", dopt.out, "verdict output directory")->capture_default_str();

    StudyOpts sto;
    CLI::App* study = app.add_subcommand("study", "sweep the temporal frame length and report accuracy per setting")->configurable();
    study->add_option("--corpus", sto.corpus, "corpus directory")->capture_default_str();
    study->add_option("--out", sto.out, "study output directory")->capture_default_str();
    study->add_option("--epochs", sto.epochs, "epoch budget per setting")->capture_default_str();
    study->add_option("--batch", sto.batch, "mini-batch size")->capture_default_str();
    study->add_option("--lr", sto.lr, "Adam learning rate")->capture_default_str();
    study->add_option("--patience", sto.patience, "early-stop patience in epochs (0 disables)")->capture_default_str();
    study->add_option("--seed", sto.seed, "training seed shared by every setting")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // help and version keep 0; any parse failure is usage
    }

    // Dispatch after the parse is fully settled: a subcommand can be named
    // both in a config-file section and on the command line, and only the
    // post-parse state has every override applied.
    try {
        if (*synth) run_synth(so, *synth);
        if (*extract) run_extract(xo, *extract);
        if (*train) run_train(to, *train);
        if (*eval_cmd) run_eval(eo, *eval_cmd);
        if (*detect) run_detect(dopt, *detect);
        if (*study) run_study(sto, *study);
    } catch (const enft::Error& e) {
        std::fprintf(stderr, "enft: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "enft: unexpected failure: %s\n", e.what());
        return 2;
    }
    return 0;
}
