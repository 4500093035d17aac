#include "polychron/train.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace polychron {

Corpus split_corpus(std::vector<uint8_t> bytes, double val_fraction) {
    if (bytes.empty()) throw std::runtime_error("corpus is empty");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("val_fraction must be in (0, 1)");
    Corpus c;
    size_t val_size = static_cast<size_t>(bytes.size() * val_fraction);
    size_t train_size = bytes.size() - val_size;
    c.train_bytes.assign(bytes.begin(), bytes.begin() + train_size);
    c.val_bytes.assign(bytes.begin() + train_size, bytes.end());
    return c;
}

Corpus load_corpus(const std::string& path, double val_fraction) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return split_corpus(std::move(bytes), val_fraction);
}

float softmax_cross_entropy(std::span<const float> logits, uint8_t target,
                            std::span<float> grad) {
    double mx = logits[0];
    for (float v : logits) mx = std::max(mx, static_cast<double>(v));
    double total = 0.0;
    for (size_t k = 0; k < logits.size(); ++k)
        total += std::exp(static_cast<double>(logits[k]) - mx);
    double log_total = std::log(total);
    for (size_t k = 0; k < logits.size(); ++k) {
        double p = std::exp(static_cast<double>(logits[k]) - mx) / total;
        grad[k] = static_cast<float>(p);
    }
    grad[target] -= 1.0f;
    double loss = log_total - (static_cast<double>(logits[target]) - mx);
    return static_cast<float>(loss);
}

float lr_schedule(uint64_t step, uint64_t warmup, float scale, bool constant) {
    if (constant) return scale;
    if (step < 1) step = 1;
    double s = static_cast<double>(step);
    double w = static_cast<double>(warmup);
    return scale * static_cast<float>(std::min(1.0 / std::sqrt(s),
                                               s / (w * std::sqrt(w))));
}

LanguageModel make_model(const TrainConfig& cfg) {
    if (cfg.kind == ModelKind::Rnn)
        return make_spiking_rnn(cfg.n, cfg.n_t, cfg.n_c, cfg.unembed_n_t,
                                cfg.unembed_n_c, cfg.seed, cfg.combine);
    return make_snn_transformer(cfg.transformer, cfg.seed);
}

namespace {

uint32_t model_n_inp(const TrainConfig& cfg) {
    return cfg.kind == ModelKind::Rnn ? cfg.n_inp : cfg.transformer.n_inp;
}

void model_logits(const LanguageModel& model, std::span<const uint8_t> window,
                  std::vector<float>& logits) {
    if (std::holds_alternative<SpikingRnn>(model))
        rnn_forward(std::get<SpikingRnn>(model), window, logits);
    else
        transformer_forward(std::get<SnnTransformer>(model), window, logits);
}

} // namespace

double evaluate(const LanguageModel& model, const Corpus& corpus,
                uint32_t max_windows) {
    uint32_t n_inp = corpus.n_inp;
    if (corpus.val_bytes.size() < size_t{n_inp} + 1)
        throw std::runtime_error("validation set smaller than one window");
    size_t total_windows = corpus.val_bytes.size() - n_inp;
    size_t count = total_windows;
    if (max_windows > 0 && count > max_windows) count = max_windows;
    std::vector<float> logits;
    std::vector<float> grad(256);
    double loss = 0.0;
    for (size_t w = 0; w < count; ++w) {
        size_t off = total_windows > count ? w * total_windows / count : w;
        std::span<const uint8_t> window(corpus.val_bytes.data() + off, n_inp);
        uint8_t target = corpus.val_bytes[off + n_inp];
        model_logits(model, window, logits);
        std::span<const float> last(logits.data() + size_t{n_inp - 1} * 256, 256);
        loss += softmax_cross_entropy(last, target, grad);
    }
    return loss / static_cast<double>(count) / std::log(2.0);
}

namespace {

void merge_row_grads(RowGradBuffer& into, const RowGradBuffer& from) {
    for (size_t i = 0; i < from.tables.size(); ++i)
        for (const auto& [row, g] : from.tables[i]) {
            auto& slot = into.tables[i][row];
            if (slot.empty()) slot.assign(into.n_out, 0.0f);
            for (size_t k = 0; k < g.size(); ++k) slot[k] += g[k];
        }
}

void merge_dense(std::vector<float>& into, const std::vector<float>& from) {
    for (size_t k = 0; k < from.size(); ++k) into[k] += from[k];
}

void merge_attn_grads(AttnGrads& into, const AttnGrads& from) {
    for (size_t t = 0; t < from.rows.size(); ++t)
        for (const auto& [row, g] : from.rows[t]) {
            auto& slot = into.rows[t][row];
            if (slot.empty()) slot.assign(g.size(), 0.0f);
            for (size_t k = 0; k < g.size(); ++k) slot[k] += g[k];
        }
    merge_dense(into.pe, from.pe);
}

struct BatchWork {
    double loss = 0.0; // summed nats over all predicted positions
    size_t targets = 0;
};

// One batch element for the RNN path.
BatchWork rnn_batch_element(const SpikingRnn& model, std::span<const uint8_t> window,
                            float inv_norm, RnnGrads& grads, LearningRule rule) {
    size_t T = window.size() - 1;
    std::span<const uint8_t> inputs(window.data(), T);
    std::vector<float> logits;
    RnnCache cache;
    rnn_forward(model, inputs, logits, &cache);
    std::vector<float> logit_grads(T * 256, 0.0f);
    BatchWork w;
    std::vector<float> g(256);
    for (size_t t = 0; t < T; ++t) {
        std::span<const float> l(logits.data() + t * 256, 256);
        w.loss += softmax_cross_entropy(l, window[t + 1], g);
        for (size_t k = 0; k < 256; ++k) logit_grads[t * 256 + k] = g[k] * inv_norm;
    }
    w.targets = T;
    rnn_backward(model, inputs, cache, logit_grads, grads, nullptr, rule);
    return w;
}

BatchWork transformer_batch_element(const SnnTransformer& model,
                                    std::span<const uint8_t> window, float inv_norm,
                                    TransformerGrads& grads) {
    size_t T = window.size() - 1;
    std::span<const uint8_t> inputs(window.data(), T);
    std::vector<float> logits;
    TransformerCache cache;
    transformer_forward(model, inputs, logits, &cache);
    std::vector<float> logit_grads(T * 256, 0.0f);
    BatchWork w;
    std::vector<float> g(256);
    for (size_t t = 0; t < T; ++t) {
        std::span<const float> l(logits.data() + t * 256, 256);
        w.loss += softmax_cross_entropy(l, window[t + 1], g);
        for (size_t k = 0; k < 256; ++k) logit_grads[t * 256 + k] = g[k] * inv_norm;
    }
    w.targets = T;
    transformer_backward(model, inputs, cache, logit_grads, grads);
    return w;
}

} // namespace

std::vector<CurvePoint> train_loop(LanguageModel& model, const Corpus& corpus,
                                   const TrainConfig& cfg, uint64_t start_step,
                                   const EvalHook& hook) {
    uint32_t n_inp = model_n_inp(cfg);
    if (corpus.train_bytes.size() < size_t{n_inp} + 1)
        throw std::runtime_error("training set smaller than one window");
    Corpus eval_corpus = corpus;
    eval_corpus.n_inp = n_inp;

    bool is_rnn = std::holds_alternative<SpikingRnn>(model);
    if (!is_rnn && cfg.rule != LearningRule::MinPairFlip)
        throw std::invalid_argument(
            "transformer training supports the MinPairFlip rule only");
    if (is_rnn && (cfg.rule == LearningRule::AllPairs ||
                   cfg.rule == LearningRule::SpikingScalar))
        throw std::invalid_argument(
            "RNN training supports MinPairFlip, NoFlip and LayerMinimal");

    uint32_t n_hidden = is_rnn ? cfg.n : cfg.transformer.n;
    float scale = cfg.lr_scale >= 0.0f
                      ? cfg.lr_scale
                      : 1.0f / std::sqrt(static_cast<float>(n_hidden));
    std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
    std::uniform_int_distribution<size_t> pick(
        0, corpus.train_bytes.size() - n_inp - 1);

    std::vector<CurvePoint> curve;
    auto do_eval = [&](uint64_t step, double train_loss) {
        CurvePoint pt{step, train_loss,
                      evaluate(model, eval_corpus, cfg.max_eval_windows)};
        curve.push_back(pt);
        if (hook) hook(pt);
        return pt.val_bpc;
    };

    if (start_step == 0) {
        double bpc = do_eval(0, 0.0);
        curve.back().train_loss_nats = bpc * std::log(2.0);
        if (cfg.stop_bpc && bpc < *cfg.stop_bpc) return curve;
    }

    uint32_t threads = std::max<uint32_t>(1, cfg.threads);
    float inv_norm =
        1.0f / (static_cast<float>(cfg.batch_size) * static_cast<float>(n_inp));

    for (uint64_t step = start_step + 1; step <= start_step + cfg.max_steps;
         ++step) {
        std::vector<size_t> offsets(cfg.batch_size);
        for (auto& o : offsets) o = pick(rng);

        double step_loss = 0.0;
        size_t step_targets = 0;

        if (is_rnn) {
            auto& m = std::get<SpikingRnn>(model);
            std::vector<RnnGrads> slot_grads(cfg.batch_size);
            std::vector<BatchWork> works(cfg.batch_size);
            auto run_slot = [&](uint32_t b) {
                init_rnn_grads(m, slot_grads[b]);
                std::span<const uint8_t> win(
                    corpus.train_bytes.data() + offsets[b], n_inp + 1);
                works[b] = rnn_batch_element(m, win, inv_norm, slot_grads[b],
                                             cfg.rule);
            };
            if (threads > 1) {
                std::vector<std::thread> pool;
                std::atomic<uint32_t> next{0};
                for (uint32_t t = 0; t < threads; ++t)
                    pool.emplace_back([&] {
                        for (uint32_t b; (b = next.fetch_add(1)) < cfg.batch_size;)
                            run_slot(b);
                    });
                for (auto& t : pool) t.join();
            } else {
                for (uint32_t b = 0; b < cfg.batch_size; ++b) run_slot(b);
            }
            RnnGrads total;
            init_rnn_grads(m, total);
            for (uint32_t b = 0; b < cfg.batch_size; ++b) { // fixed reduction order
                merge_row_grads(total.recur, slot_grads[b].recur);
                merge_row_grads(total.unembed, slot_grads[b].unembed);
                merge_dense(total.embedder, slot_grads[b].embedder);
                step_loss += works[b].loss;
                step_targets += works[b].targets;
            }
            rnn_apply_update(m, total, lr_schedule(step, cfg.warmup_steps, scale,
                                                   cfg.lr_constant));
        } else {
            auto& m = std::get<SnnTransformer>(model);
            std::vector<TransformerGrads> slot_grads(cfg.batch_size);
            std::vector<BatchWork> works(cfg.batch_size);
            auto run_slot = [&](uint32_t b) {
                init_transformer_grads(m, slot_grads[b]);
                std::span<const uint8_t> win(
                    corpus.train_bytes.data() + offsets[b], n_inp + 1);
                works[b] =
                    transformer_batch_element(m, win, inv_norm, slot_grads[b]);
            };
            if (threads > 1) {
                std::vector<std::thread> pool;
                std::atomic<uint32_t> next{0};
                for (uint32_t t = 0; t < threads; ++t)
                    pool.emplace_back([&] {
                        for (uint32_t b; (b = next.fetch_add(1)) < cfg.batch_size;)
                            run_slot(b);
                    });
                for (auto& t : pool) t.join();
            } else {
                for (uint32_t b = 0; b < cfg.batch_size; ++b) run_slot(b);
            }
            TransformerGrads total;
            init_transformer_grads(m, total);
            for (uint32_t b = 0; b < cfg.batch_size; ++b) {
                for (size_t blk = 0; blk < total.blocks.size(); ++blk) {
                    for (size_t h = 0; h < total.blocks[blk].heads.size(); ++h)
                        merge_attn_grads(total.blocks[blk].heads[h],
                                         slot_grads[b].blocks[blk].heads[h]);
                    if (m.blocks[blk].ffn_enabled)
                        merge_row_grads(total.blocks[blk].ffn,
                                        slot_grads[b].blocks[blk].ffn);
                }
                merge_row_grads(total.unembed, slot_grads[b].unembed);
                merge_dense(total.embedder, slot_grads[b].embedder);
                step_loss += works[b].loss;
                step_targets += works[b].targets;
            }
            transformer_apply_update(m, total,
                                     lr_schedule(step, cfg.warmup_steps, scale,
                                                 cfg.lr_constant));
        }

        double mean_loss = step_loss / static_cast<double>(step_targets);
        if (std::isnan(mean_loss))
            throw std::runtime_error("training diverged: loss is NaN");

        bool last = step == start_step + cfg.max_steps;
        if (cfg.eval_interval > 0 && (step % cfg.eval_interval == 0 || last)) {
            double bpc = do_eval(step, mean_loss);
            if (cfg.stop_bpc && bpc < *cfg.stop_bpc) break;
        }
    }
    return curve;
}

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& curve) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write curve file: " + path);
    f << "step,train_loss_nats,val_bpc\n";
    char buf[128];
    for (const auto& pt : curve) {
        std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g\n",
                      static_cast<unsigned long long>(pt.step),
                      pt.train_loss_nats, pt.val_bpc);
        f << buf;
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'P', 'L', 'Y', 'C'};
constexpr uint32_t kVersion = 1;

struct Writer {
    std::ofstream f;
    explicit Writer(const std::string& path) : f(path, std::ios::binary) {
        if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    }
    void bytes(const void* p, size_t n) {
        f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    template <typename T> void pod(T v) { bytes(&v, sizeof v); }
    void floats(const std::vector<float>& v) {
        bytes(v.data(), v.size() * sizeof(float));
    }
    void u32s(const std::vector<uint32_t>& v) {
        bytes(v.data(), v.size() * sizeof(uint32_t));
    }
};

struct Reader {
    std::ifstream f;
    explicit Reader(const std::string& path) : f(path, std::ios::binary) {
        if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    }
    void bytes(void* p, size_t n) {
        f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (f.gcount() != static_cast<std::streamsize>(n))
            throw std::runtime_error("checkpoint truncated");
    }
    template <typename T> T pod() {
        T v;
        bytes(&v, sizeof v);
        return v;
    }
    void floats(std::vector<float>& v, size_t n) {
        v.resize(n);
        bytes(v.data(), n * sizeof(float));
    }
    void u32s(std::vector<uint32_t>& v, size_t n) {
        v.resize(n);
        bytes(v.data(), n * sizeof(uint32_t));
    }
};

void write_anchor_set(Writer& w, const AnchorSet& s) {
    w.pod(static_cast<uint32_t>(s.mode));
    w.pod(s.comparison_count());
    switch (s.mode) {
    case HashMode::PairwiseSign:
        w.u32s(s.a);
        w.u32s(s.b);
        break;
    case HashMode::BinQuantized:
        w.u32s(s.a);
        w.pod(s.bins);
        w.pod(s.bin_lo);
        w.pod(s.bin_hi);
        break;
    case HashMode::ComponentSign:
        w.u32s(s.a);
        break;
    case HashMode::HyperplaneSign:
        w.pod(static_cast<uint32_t>(s.planes.empty() ? 0 : s.planes[0].size()));
        for (const auto& plane : s.planes) w.floats(plane);
        break;
    }
}

AnchorSet read_anchor_set(Reader& r) {
    AnchorSet s;
    s.mode = static_cast<HashMode>(r.pod<uint32_t>());
    uint32_t n_c = r.pod<uint32_t>();
    switch (s.mode) {
    case HashMode::PairwiseSign:
        r.u32s(s.a, n_c);
        r.u32s(s.b, n_c);
        break;
    case HashMode::BinQuantized:
        r.u32s(s.a, n_c);
        s.bins = r.pod<uint32_t>();
        s.bin_lo = r.pod<float>();
        s.bin_hi = r.pod<float>();
        break;
    case HashMode::ComponentSign:
        r.u32s(s.a, n_c);
        break;
    case HashMode::HyperplaneSign: {
        uint32_t dim = r.pod<uint32_t>();
        s.planes.resize(n_c);
        for (auto& plane : s.planes) {
            std::vector<float> v;
            r.floats(v, dim);
            plane = std::move(v);
        }
        break;
    }
    default:
        throw std::runtime_error("checkpoint has unknown hash mode");
    }
    return s;
}

void write_transform(Writer& w, const LutTransform& t) {
    w.pod(t.table_count());
    w.pod(t.n_in);
    w.pod(t.n_out);
    w.pod(static_cast<uint8_t>(t.residual));
    w.pod(t.trainable_only);
    for (const auto& table : t.tables) {
        write_anchor_set(w, table.anchors);
        w.pod(static_cast<uint64_t>(table.row_count()));
        w.floats(table.rows);
    }
}

LutTransform read_transform(Reader& r) {
    LutTransform t;
    uint32_t n_t = r.pod<uint32_t>();
    t.n_in = r.pod<uint32_t>();
    t.n_out = r.pod<uint32_t>();
    t.residual = r.pod<uint8_t>() != 0;
    t.trainable_only = r.pod<int32_t>();
    t.tables.resize(n_t);
    for (auto& table : t.tables) {
        table.anchors = read_anchor_set(r);
        uint64_t rows = r.pod<uint64_t>();
        if (rows != table.anchors.row_count())
            throw std::runtime_error("checkpoint row count mismatch");
        table.n_out = t.n_out;
        r.floats(table.rows, rows * t.n_out);
    }
    return t;
}

void write_attention_head(Writer& w, const AttentionHead& h) {
    w.pod(h.n);
    w.pod(h.n_c);
    w.pod(h.p);
    w.pod(h.n_inp);
    w.pod(static_cast<uint32_t>(h.tables.size()));
    for (const auto& table : h.tables) {
        write_anchor_set(w, table.q);
        write_anchor_set(w, table.k);
        write_anchor_set(w, table.pe);
        w.floats(table.rows);
    }
    w.floats(h.pe);
}

AttentionHead read_attention_head(Reader& r) {
    AttentionHead h;
    h.n = r.pod<uint32_t>();
    h.n_c = r.pod<uint32_t>();
    h.p = r.pod<uint32_t>();
    h.n_inp = r.pod<uint32_t>();
    uint32_t n_t = r.pod<uint32_t>();
    h.tables.resize(n_t);
    for (auto& table : h.tables) {
        table.q = read_anchor_set(r);
        table.k = read_anchor_set(r);
        table.pe = read_anchor_set(r);
        table.n_out = h.n;
        r.floats(table.rows, table.row_count() * h.n);
    }
    r.floats(h.pe, size_t{h.n_inp - 1} * h.p);
    return h;
}

std::string config_to_text(const TrainConfig& cfg, uint64_t step) {
    std::ostringstream os;
    os << "kind=" << (cfg.kind == ModelKind::Rnn ? "rnn" : "transformer") << "\n";
    os << "n=" << cfg.n << "\n";
    os << "n_inp=" << cfg.n_inp << "\n";
    os << "n_t=" << cfg.n_t << "\n";
    os << "n_c=" << cfg.n_c << "\n";
    os << "unembed_n_t=" << cfg.unembed_n_t << "\n";
    os << "unembed_n_c=" << cfg.unembed_n_c << "\n";
    os << "combine=" << static_cast<uint32_t>(cfg.combine) << "\n";
    os << "rule=" << static_cast<uint32_t>(cfg.rule) << "\n";
    os << "lr_scale=" << cfg.lr_scale << "\n";
    os << "warmup_steps=" << cfg.warmup_steps << "\n";
    os << "lr_constant=" << (cfg.lr_constant ? 1 : 0) << "\n";
    os << "batch_size=" << cfg.batch_size << "\n";
    os << "max_steps=" << cfg.max_steps << "\n";
    os << "eval_interval=" << cfg.eval_interval << "\n";
    os << "max_eval_windows=" << cfg.max_eval_windows << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "threads=" << cfg.threads << "\n";
    if (cfg.stop_bpc) os << "stop_bpc=" << *cfg.stop_bpc << "\n";
    const auto& t = cfg.transformer;
    os << "tf_n=" << t.n << "\n";
    os << "tf_n_inp=" << t.n_inp << "\n";
    os << "tf_layers=" << t.layers << "\n";
    os << "tf_heads=" << t.heads << "\n";
    os << "tf_n_t=" << t.n_t << "\n";
    os << "tf_n_c=" << t.n_c << "\n";
    os << "tf_p=" << t.p << "\n";
    os << "tf_ffn=" << (t.ffn_enabled ? 1 : 0) << "\n";
    os << "tf_ffn_n_t=" << t.ffn_n_t << "\n";
    os << "tf_ffn_n_c=" << t.ffn_n_c << "\n";
    os << "tf_unembed_n_t=" << t.unembed_n_t << "\n";
    os << "tf_unembed_n_c=" << t.unembed_n_c << "\n";
    os << "step=" << step << "\n";
    return os.str();
}

void config_from_text(const std::string& text, TrainConfig& cfg, uint64_t& step) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto u = [&] { return std::stoull(val); };
        auto d = [&] { return std::stod(val); };
        if (key == "kind")
            cfg.kind = val == "rnn" ? ModelKind::Rnn : ModelKind::Transformer;
        else if (key == "n") cfg.n = static_cast<uint32_t>(u());
        else if (key == "n_inp") cfg.n_inp = static_cast<uint32_t>(u());
        else if (key == "n_t") cfg.n_t = static_cast<uint32_t>(u());
        else if (key == "n_c") cfg.n_c = static_cast<uint32_t>(u());
        else if (key == "unembed_n_t") cfg.unembed_n_t = static_cast<uint32_t>(u());
        else if (key == "unembed_n_c") cfg.unembed_n_c = static_cast<uint32_t>(u());
        else if (key == "combine") cfg.combine = static_cast<RnnCombine>(u());
        else if (key == "rule") cfg.rule = static_cast<LearningRule>(u());
        else if (key == "lr_scale") cfg.lr_scale = static_cast<float>(d());
        else if (key == "warmup_steps") cfg.warmup_steps = u();
        else if (key == "lr_constant") cfg.lr_constant = u() != 0;
        else if (key == "batch_size") cfg.batch_size = static_cast<uint32_t>(u());
        else if (key == "max_steps") cfg.max_steps = u();
        else if (key == "eval_interval") cfg.eval_interval = u();
        else if (key == "max_eval_windows")
            cfg.max_eval_windows = static_cast<uint32_t>(u());
        else if (key == "seed") cfg.seed = u();
        else if (key == "threads") cfg.threads = static_cast<uint32_t>(u());
        else if (key == "stop_bpc") cfg.stop_bpc = d();
        else if (key == "tf_n") cfg.transformer.n = static_cast<uint32_t>(u());
        else if (key == "tf_n_inp")
            cfg.transformer.n_inp = static_cast<uint32_t>(u());
        else if (key == "tf_layers")
            cfg.transformer.layers = static_cast<uint32_t>(u());
        else if (key == "tf_heads")
            cfg.transformer.heads = static_cast<uint32_t>(u());
        else if (key == "tf_n_t") cfg.transformer.n_t = static_cast<uint32_t>(u());
        else if (key == "tf_n_c") cfg.transformer.n_c = static_cast<uint32_t>(u());
        else if (key == "tf_p") cfg.transformer.p = static_cast<uint32_t>(u());
        else if (key == "tf_ffn") cfg.transformer.ffn_enabled = u() != 0;
        else if (key == "tf_ffn_n_t")
            cfg.transformer.ffn_n_t = static_cast<uint32_t>(u());
        else if (key == "tf_ffn_n_c")
            cfg.transformer.ffn_n_c = static_cast<uint32_t>(u());
        else if (key == "tf_unembed_n_t")
            cfg.transformer.unembed_n_t = static_cast<uint32_t>(u());
        else if (key == "tf_unembed_n_c")
            cfg.transformer.unembed_n_c = static_cast<uint32_t>(u());
        else if (key == "step") step = u();
    }
}

} // namespace

void save_checkpoint(const std::string& path, const LanguageModel& model,
                     const TrainConfig& cfg, uint64_t step) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.pod(kVersion);
    std::string config = config_to_text(cfg, step);
    w.pod(static_cast<uint32_t>(config.size()));
    w.bytes(config.data(), config.size());
    if (std::holds_alternative<SpikingRnn>(model)) {
        const auto& m = std::get<SpikingRnn>(model);
        w.floats(m.embedder);
        write_transform(w, m.recur);
        write_transform(w, m.unembed);
    } else {
        const auto& m = std::get<SnnTransformer>(model);
        w.floats(m.embedder);
        for (const auto& block : m.blocks) {
            for (const auto& head : block.heads) write_attention_head(w, head);
            w.pod(static_cast<uint8_t>(block.ffn_enabled));
            if (block.ffn_enabled) write_transform(w, block.ffn);
        }
        write_transform(w, m.unembed);
    }
    if (!w.f) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint has bad magic");
    uint32_t version = r.pod<uint32_t>();
    if (version != kVersion)
        throw std::runtime_error("checkpoint version mismatch: got " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kVersion));
    uint32_t config_len = r.pod<uint32_t>();
    std::string config(config_len, '\0');
    r.bytes(config.data(), config_len);
    Checkpoint ck;
    config_from_text(config, ck.config, ck.step);
    if (ck.config.kind == ModelKind::Rnn) {
        SpikingRnn m;
        m.n = ck.config.n;
        m.combine = ck.config.combine;
        r.floats(m.embedder, size_t{256} * m.n);
        m.recur = read_transform(r);
        m.unembed = read_transform(r);
        ck.model = std::move(m);
    } else {
        SnnTransformer m;
        m.cfg = ck.config.transformer;
        r.floats(m.embedder, size_t{256} * m.cfg.n);
        m.blocks.resize(m.cfg.layers);
        for (auto& block : m.blocks) {
            block.heads.resize(m.cfg.heads);
            for (auto& head : block.heads) head = read_attention_head(r);
            block.ffn_enabled = r.pod<uint8_t>() != 0;
            if (block.ffn_enabled) block.ffn = read_transform(r);
        }
        m.unembed = read_transform(r);
        ck.model = std::move(m);
    }
    return ck;
}

} // namespace polychron
