#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "enft/autodiff.hpp"
#include "enft/errors.hpp"
#include "enft/features.hpp"
#include "enft/nn.hpp"
#include "enft/rng.hpp"
#include "enft/tensor.hpp"

namespace enft {

// Parallel two-branch classifier: a convolutional stack over the square
// phase image and a bidirectional recurrent stack over the phase columns,
// fused by a sigmoid attention gate and classified by an MLP head.

enum class Variant { full, cnn_only, bilstm_only, no_attention_concat };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::cnn_only: return "cnn_only";
        case Variant::bilstm_only: return "bilstm_only";
        case Variant::no_attention_concat: return "no_attention_concat";
    }
    throw ConfigError("unknown model variant");
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "cnn_only") return Variant::cnn_only;
    if (s == "bilstm_only") return Variant::bilstm_only;
    if (s == "no_attention_concat") return Variant::no_attention_concat;
    throw ConfigError("unknown model variant: " + s);
}

struct ModelConfig {
    int n = 45;    // spatial image side
    int p_n = 85;  // phase points per temporal column
    int f_n = 25;  // temporal columns (timesteps)
    std::vector<int> conv_channels = {16, 32, 64};
    int conv_kernel = 3;
    int pool = 2;
    std::vector<int> cnn_fc = {1024, 256};
    int lstm_units = 85;
    std::vector<int> rnn_fc = {512, 256};
    std::vector<int> mlp = {400, 256, 128, 32};
    double dropout_rate = 0.2;
    unsigned long long seed = 1;

    // Spatial side after the conv/pool stack (ceil pooling at each stage).
    int pooled_side() const {
        int h = n;
        for (std::size_t i = 0; i < conv_channels.size(); ++i) h = (h + pool - 1) / pool;
        return h;
    }

    int flatten_width() const {
        const int side = pooled_side();
        return side * side * conv_channels.back();
    }

    void validate() const {
        if (n < 2 || p_n < 1 || f_n < 1) throw ConfigError("feature sizes must be positive");
        if (conv_channels.empty() || cnn_fc.empty() || rnn_fc.empty() || mlp.empty())
            throw ConfigError("layer width lists must be nonempty");
        for (int c : conv_channels)
            if (c < 1) throw ConfigError("conv channel counts must be positive");
        for (int w : cnn_fc)
            if (w < 1) throw ConfigError("dense widths must be positive");
        for (int w : rnn_fc)
            if (w < 1) throw ConfigError("dense widths must be positive");
        for (int w : mlp)
            if (w < 1) throw ConfigError("dense widths must be positive");
        if (conv_kernel < 1 || (conv_kernel % 2) == 0)
            throw ConfigError("conv kernel must be odd and positive");
        if (pool != 2) throw ConfigError("pooling window is fixed at 2");
        if (lstm_units < 1) throw ConfigError("recurrent width must be positive");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("dropout rate must lie in [0,1)");
        // every pooling stage needs at least a 2x2 input
        int h = n;
        for (std::size_t i = 0; i < conv_channels.size(); ++i) {
            if (h < 2) throw ConfigError("spatial size too small for the pooling stack");
            h = (h + pool - 1) / pool;
        }
    }

    nlohmann::json to_json() const {
        return {{"n", n},
                {"p_n", p_n},
                {"f_n", f_n},
                {"conv_channels", conv_channels},
                {"conv_kernel", conv_kernel},
                {"pool", pool},
                {"cnn_fc", cnn_fc},
                {"lstm_units", lstm_units},
                {"rnn_fc", rnn_fc},
                {"mlp", mlp},
                {"dropout_rate", dropout_rate},
                {"seed", seed}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.n = j.at("n").get<int>();
        c.p_n = j.at("p_n").get<int>();
        c.f_n = j.at("f_n").get<int>();
        c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
        c.conv_kernel = j.at("conv_kernel").get<int>();
        c.pool = j.at("pool").get<int>();
        c.cnn_fc = j.at("cnn_fc").get<std::vector<int>>();
        c.lstm_units = j.at("lstm_units").get<int>();
        c.rnn_fc = j.at("rnn_fc").get<std::vector<int>>();
        c.mlp = j.at("mlp").get<std::vector<int>>();
        c.dropout_rate = j.at("dropout_rate").get<double>();
        c.seed = j.at("seed").get<unsigned long long>();
        return c;
    }
};

struct LabeledExample {
    SpatialFeature P;
    TemporalFeature X;
    int label = 0;  // 0 = original, 1 = tampered
};

using Dataset = std::vector<LabeledExample>;

class Model {
  public:
    explicit Model(ModelConfig cfg, Variant variant = Variant::full)
        : cfg_(std::move(cfg)), variant_(variant) {
        cfg_.validate();
        build_parameters();
    }

    const ModelConfig& config() const { return cfg_; }
    Variant variant() const { return variant_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }

    long parameter_count() const {
        long total = 0;
        for (const auto& p : params_) total += p.value.numel();
        return total;
    }

    int fused_width() const {
        switch (variant_) {
            case Variant::cnn_only: return cfg_.cnn_fc.back();
            case Variant::bilstm_only: return cfg_.rnn_fc.back();
            default: return cfg_.cnn_fc.back() + cfg_.rnn_fc.back();
        }
    }

    // Builds the forward computation on the given tape. In training mode the
    // parameters enter as differentiable leaves and dropout masks are drawn
    // from the rng; in eval mode the parameters are referenced in place and
    // dropout is the identity.
    Var forward_graph(Graph& g, const SpatialFeature& P, const TemporalFeature& X,
                      bool train_mode, Rng* mask_rng) const {
        if (variant_ != Variant::bilstm_only && P.n != cfg_.n)
            throw ShapeMismatch("spatial feature size disagrees with the model");
        if (variant_ != Variant::cnn_only && (X.p_n != cfg_.p_n || X.f_n != cfg_.f_n))
            throw ShapeMismatch("temporal feature size disagrees with the model");

        int next = 0;  // parameter cursor; creation order must match build_parameters
        const auto leaf = [&](Graph& gr) {
            const int idx = next++;
            const Parameter& p = params_[static_cast<std::size_t>(idx)];
            return train_mode ? gr.param(p, idx) : gr.constant_ref(p.value);
        };

        Var fused{nullptr, -1};
        Var spatial_out{nullptr, -1};
        Var temporal_out{nullptr, -1};

        if (variant_ != Variant::bilstm_only) spatial_out = spatial_branch(g, P, leaf);
        if (variant_ != Variant::cnn_only) temporal_out = temporal_branch(g, X, leaf);

        switch (variant_) {
            case Variant::cnn_only: fused = spatial_out; break;
            case Variant::bilstm_only: fused = temporal_out; break;
            case Variant::no_attention_concat:
                fused = concat(spatial_out, temporal_out);
                break;
            case Variant::full: {
                AttentionVars av{leaf(g), leaf(g), leaf(g), leaf(g),
                                 leaf(g), leaf(g), leaf(g), leaf(g)};
                fused = attention_fuse(spatial_out, temporal_out, av);
                break;
            }
        }

        Var h = fused;
        for (std::size_t i = 0; i < cfg_.mlp.size(); ++i) {
            // leaves drawn as separate statements: the cursor must advance in
            // declaration order, which call-argument evaluation cannot ensure
            Var w = leaf(g);
            Var b = leaf(g);
            h = leaky_relu(dense(h, w, b));
            if (train_mode && cfg_.dropout_rate > 0.0 && mask_rng)
                h = dropout(g, h,
                            dropout_mask(*mask_rng, static_cast<int>(h.val().numel()),
                                         cfg_.dropout_rate));
        }
        Var w_out = leaf(g);
        Var b_out = leaf(g);
        return softmax2(dense(h, w_out, b_out));
    }

    // Eval-mode probability pair.
    std::array<double, 2> predict(const SpatialFeature& P, const TemporalFeature& X) const {
        Graph g;
        Var p = forward_graph(g, P, X, false, nullptr);
        return {p.val().v[0], p.val().v[1]};
    }

  private:
    template <class Leaf>
    Var spatial_branch(Graph& g, const SpatialFeature& P, const Leaf& leaf) const {
        Tensor img({cfg_.n, cfg_.n, 1});
        img.v = P.m;
        Var h = g.constant(std::move(img));
        for (std::size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
            Var w = leaf(g);
            Var b = leaf(g);
            h = relu(conv2d(h, w, b));
            h = maxpool2d(h, /*ceil_mode=*/true);
        }
        h = flatten(h);
        for (std::size_t i = 0; i < cfg_.cnn_fc.size(); ++i) {
            Var w = leaf(g);
            Var b = leaf(g);
            h = relu(dense(h, w, b));
        }
        return h;
    }

    template <class Leaf>
    Var temporal_branch(Graph& g, const TemporalFeature& X, const Leaf& leaf) const {
        // column t of the matrix is timestep t
        std::vector<Var> seq;
        seq.reserve(static_cast<std::size_t>(cfg_.f_n));
        for (int t = 0; t < cfg_.f_n; ++t) {
            Tensor col({cfg_.p_n});
            for (int r = 0; r < cfg_.p_n; ++r)
                col.v[static_cast<std::size_t>(r)] = X.at(r, t);
            seq.push_back(g.constant(std::move(col)));
        }

        const int units = cfg_.lstm_units;
        std::vector<Var> normed;
        for (int layer = 0; layer < 2; ++layer) {
            LstmVars fwd{leaf(g), leaf(g), leaf(g), leaf(g), leaf(g), leaf(g), leaf(g), leaf(g)};
            LstmVars bwd{leaf(g), leaf(g), leaf(g), leaf(g), leaf(g), leaf(g), leaf(g), leaf(g)};
            std::vector<Var> out = bilstm(g, seq, fwd, bwd, units);
            Var gain = leaf(g);
            Var bias = leaf(g);
            normed.clear();
            for (Var v : out) normed.push_back(layer_norm(v, gain, bias));
            seq = normed;
        }

        // final forward state sits in the last timestep's forward half, the
        // final backward state in the first timestep's backward half
        Var fwd_final = slice(seq.back(), 0, units);
        Var bwd_final = slice(seq.front(), units, units);
        Var h = concat(fwd_final, bwd_final);
        for (std::size_t i = 0; i < cfg_.rnn_fc.size(); ++i) {
            Var w = leaf(g);
            Var b = leaf(g);
            h = relu(dense(h, w, b));
        }
        return h;
    }

    void add_dense(Rng& rng, const std::string& name, int in, int out) {
        params_.emplace_back(name + "/w", glorot_init(rng, {in, out}, in, out));
        params_.emplace_back(name + "/b", Tensor({out}));
    }

    void add_lstm(Rng& rng, const std::string& name, int in, int units) {
        const int cat = units + in;
        const double bound = std::sqrt(1.0 / units);
        const char* gates[] = {"i", "f", "g", "o"};
        for (const char* gate : gates) {
            params_.emplace_back(name + "/w" + gate, uniform_init(rng, {cat, units}, bound));
            Tensor b({units});
            if (gate[0] == 'f')
                for (auto& v : b.v) v = 1.0;  // open forget gates at start
            params_.emplace_back(name + "/b" + gate, std::move(b));
        }
    }

    void build_parameters() {
        Rng rng(mix_seed(cfg_.seed, 0x6d6f64656cULL));
        const int k = cfg_.conv_kernel;

        if (variant_ != Variant::bilstm_only) {
            int cin = 1;
            for (std::size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
                const int cout = cfg_.conv_channels[i];
                const std::string name = "spatial/conv" + std::to_string(i);
                params_.emplace_back(name + "/kernel",
                                     glorot_init(rng, {k, k, cin, cout}, k * k * cin, k * k * cout));
                params_.emplace_back(name + "/bias", Tensor({cout}));
                cin = cout;
            }
            int width = cfg_.flatten_width();
            for (std::size_t i = 0; i < cfg_.cnn_fc.size(); ++i) {
                add_dense(rng, "spatial/fc" + std::to_string(i), width, cfg_.cnn_fc[i]);
                width = cfg_.cnn_fc[i];
            }
        }

        if (variant_ != Variant::cnn_only) {
            int in = cfg_.p_n;
            for (int layer = 0; layer < 2; ++layer) {
                const std::string name = "temporal/bilstm" + std::to_string(layer);
                add_lstm(rng, name + "/fwd", in, cfg_.lstm_units);
                add_lstm(rng, name + "/bwd", in, cfg_.lstm_units);
                const int width = 2 * cfg_.lstm_units;
                Tensor gain({width});
                for (auto& v : gain.v) v = 1.0;
                params_.emplace_back("temporal/norm" + std::to_string(layer) + "/gain",
                                     std::move(gain));
                params_.emplace_back("temporal/norm" + std::to_string(layer) + "/bias",
                                     Tensor({width}));
                in = width;
            }
            int width = 2 * cfg_.lstm_units;
            for (std::size_t i = 0; i < cfg_.rnn_fc.size(); ++i) {
                add_dense(rng, "temporal/fc" + std::to_string(i), width, cfg_.rnn_fc[i]);
                width = cfg_.rnn_fc[i];
            }
        }

        const int L = fused_width();
        if (variant_ == Variant::full) {
            const int mid = std::max(1, L / 8);
            add_dense(rng, "fusion/squeeze0", L, L);
            add_dense(rng, "fusion/squeeze1", L, mid);
            add_dense(rng, "fusion/squeeze2", mid, L);
            add_dense(rng, "fusion/gate", L, L);
        }

        int width = L;
        for (std::size_t i = 0; i < cfg_.mlp.size(); ++i) {
            add_dense(rng, "head/fc" + std::to_string(i), width, cfg_.mlp[i]);
            width = cfg_.mlp[i];
        }
        add_dense(rng, "head/out", width, 2);
    }

    ModelConfig cfg_;
    Variant variant_;
    std::vector<Parameter> params_;
};

// ---- training ----

struct TrainConfig {
    int epochs = 300;
    int batch_size = 64;
    double lr = 0.001;
    int patience = 30;  // epochs without a new best val accuracy; <= 0 disables
    unsigned long long seed = 1;

    void validate() const {
        if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch size must be >= 1");
        if (!(lr >= 0.0)) throw ConfigError("learning rate must be nonnegative");
    }
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct Metrics {
    double accuracy = 0.0;
    double loss = 0.0;
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_accuracy = 0.0;
};

namespace detail {

inline void check_dataset(const Dataset& data, const char* which) {
    if (data.empty()) throw DataError(std::string(which) + " set is empty");
    for (const auto& ex : data) {
        if (ex.label != 0 && ex.label != 1) throw DataError("label outside {0,1}");
        for (double v : ex.P.m)
            if (!std::isfinite(v)) throw DataError("non-finite spatial feature value");
        for (double v : ex.X.m)
            if (!std::isfinite(v)) throw DataError("non-finite temporal feature value");
    }
}

inline double eval_loss_item(const Model& m, const LabeledExample& ex) {
    Graph g;
    Var p = m.forward_graph(g, ex.P, ex.X, false, nullptr);
    return bce_loss(p, ex.label).val().v[0];
}

}  // namespace detail

inline Metrics evaluate(const Model& m, const Dataset& test) {
    detail::check_dataset(test, "test");
    Metrics out;
    double loss_sum = 0.0;
    for (const auto& ex : test) {
        const std::array<double, 2> p = m.predict(ex.P, ex.X);
        const int pred = p[1] > p[0] ? 1 : 0;
        loss_sum += -std::log(std::clamp(p[static_cast<std::size_t>(ex.label)], 1e-12, 1.0 - 1e-12));
        if (ex.label == 1 && pred == 1) ++out.tp;
        if (ex.label == 0 && pred == 1) ++out.fp;
        if (ex.label == 0 && pred == 0) ++out.tn;
        if (ex.label == 1 && pred == 0) ++out.fn;
    }
    out.loss = loss_sum / static_cast<double>(test.size());
    out.accuracy = static_cast<double>(out.tp + out.tn) / static_cast<double>(test.size());
    return out;
}

// Mini-batch Adam with per-epoch reshuffling, best-validation-accuracy
// weight retention (ties keep the earlier epoch), and optional early
// stopping. Single-threaded and draw-order deterministic: the same seed and
// data reproduce the history bit for bit.
inline TrainResult train(Model& m, const Dataset& train_set, const Dataset& val_set,
                         const TrainConfig& tc) {
    tc.validate();
    detail::check_dataset(train_set, "train");
    detail::check_dataset(val_set, "validation");

    std::vector<Parameter>& params = m.parameters();
    Rng order_rng(mix_seed(tc.seed, 0x736875666cULL));
    Rng mask_rng(mix_seed(tc.seed, 0x64726f70ULL));
    const AdamConfig adam{.lr = tc.lr};

    TrainResult result;
    std::vector<Tensor> best_values;
    long step = 0;

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    std::vector<double> item_loss(train_set.size());

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
            zero_grads(params);
            for (std::size_t i = start; i < stop; ++i) {
                const LabeledExample& ex = train_set[static_cast<std::size_t>(order[i])];
                Graph g;
                Var p = m.forward_graph(g, ex.P, ex.X, true, &mask_rng);
                Var loss = bce_loss(p, ex.label);
                item_loss[static_cast<std::size_t>(order[i])] = loss.val().v[0];
                g.backward(loss, params);
            }
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            for (auto& p : params)
                for (auto& gv : p.grad.v) gv *= inv_batch;
            adam_step(params, ++step, adam);
        }

        // summed by dataset position, not visit order, so the recorded loss
        // does not depend on the epoch's shuffle
        double loss_sum = 0.0;
        for (double l : item_loss) loss_sum += l;

        EpochStats es;
        es.epoch = epoch;
        es.train_loss = loss_sum / static_cast<double>(train_set.size());
        const Metrics vm = evaluate(m, val_set);
        es.val_loss = vm.loss;
        es.val_accuracy = vm.accuracy;
        result.history.push_back(es);

        if (result.best_epoch == 0 || es.val_accuracy > result.best_val_accuracy) {
            result.best_epoch = epoch;
            result.best_val_accuracy = es.val_accuracy;
            best_values.clear();
            for (const auto& p : params) best_values.push_back(p.value);
        }
        if (tc.patience > 0 && epoch - result.best_epoch >= tc.patience) break;
    }

    for (std::size_t i = 0; i < params.size(); ++i) params[i].value = best_values[i];
    return result;
}

// ---- persistence ----

// Weights in the binary container; the JSON sidecar additionally carries the
// model configuration and variant so a file fully describes its model.
inline void save_model(const Model& m, const std::string& path) {
    save_parameters(path, m.parameters());
    nlohmann::json side;
    side["format_version"] = kWeightVersion;
    side["model"] = m.config().to_json();
    side["variant"] = variant_name(m.variant());
    side["parameters"] = nlohmann::json::array();
    for (const Parameter& p : m.parameters())
        side["parameters"].push_back({{"name", p.name}, {"shape", p.value.shape}});
    std::ofstream js(path + ".json", std::ios::trunc);
    if (!js || !(js << side.dump(2) << "\n")) throw IoFailure("cannot write sidecar: " + path);
}

inline Model load_model(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw IoFailure("cannot open model sidecar: " + path + ".json");
    nlohmann::json side;
    try {
        js >> side;
    } catch (const nlohmann::json::exception&) {
        throw CorruptWeights("model sidecar is not valid JSON: " + path + ".json");
    }
    ModelConfig cfg;
    Variant variant = Variant::full;
    try {
        cfg = ModelConfig::from_json(side.at("model"));
        variant = variant_from_name(side.at("variant").get<std::string>());
    } catch (const nlohmann::json::exception&) {
        throw CorruptWeights("model sidecar misses required fields: " + path + ".json");
    }
    Model m(cfg, variant);
    load_parameters(path, m.parameters());
    return m;
}

// ---- splits and ablation ----

struct SplitIndices {
    std::vector<int> train, val, test;
};

// Shuffles within each class, then deals out train/val/test so both labels
// keep the requested proportions.
inline SplitIndices stratified_split(const std::vector<int>& labels, double train_frac,
                                     double val_frac, unsigned long long seed) {
    if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0)
        throw InvalidParams("split fractions must leave room for a test share");
    SplitIndices out;
    Rng rng(mix_seed(seed, 0x73706c6974ULL));
    for (int cls = 0; cls <= 1; ++cls) {
        std::vector<int> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(static_cast<int>(i));
        rng.shuffle(idx);
        const std::size_t n_train =
            static_cast<std::size_t>(std::lround(train_frac * static_cast<double>(idx.size())));
        const std::size_t n_val =
            static_cast<std::size_t>(std::lround(val_frac * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i < n_train)
                out.train.push_back(idx[i]);
            else if (i < n_train + n_val)
                out.val.push_back(idx[i]);
            else
                out.test.push_back(idx[i]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

inline Dataset subset(const Dataset& all, const std::vector<int>& idx) {
    Dataset out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(all[static_cast<std::size_t>(i)]);
    return out;
}

// Trains the requested variant on a stratified 64/16/20 split of the corpus
// and reports test metrics.
inline Metrics ablation_run(const Dataset& corpus, Variant variant, const ModelConfig& base_cfg,
                            const TrainConfig& tc) {
    std::vector<int> labels;
    labels.reserve(corpus.size());
    for (const auto& ex : corpus) labels.push_back(ex.label);
    const SplitIndices split = stratified_split(labels, 0.64, 0.16, tc.seed);

    Model m(base_cfg, variant);
    train(m, subset(corpus, split.train), subset(corpus, split.val), tc);
    return evaluate(m, subset(corpus, split.test));
}

// ---- exports ----

inline void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoFailure("cannot open history file: " + path);
    os << "epoch,train_loss,val_loss,val_accuracy\n";
    char buf[128];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                      e.val_loss, e.val_accuracy);
        os << buf;
    }
    if (!os) throw IoFailure("failed writing history file: " + path);
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"loss", m.loss}, {"tp", m.tp},
            {"fp", m.fp},             {"tn", m.tn},     {"fn", m.fn}};
}

inline void write_metrics_json(const std::string& path, const Metrics& m) {
    std::ofstream os(path, std::ios::trunc);
    if (!os || !(os << metrics_to_json(m).dump(2) << "\n"))
        throw IoFailure("cannot write metrics file: " + path);
}

}  // namespace enft
