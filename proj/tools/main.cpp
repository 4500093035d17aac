// Command-line front end: train / eval / generate / resources / capacity /
// selftest. Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "polychron/resources.hpp"
#include "polychron/train.hpp"

using namespace polychron;

namespace {

// ---------------------------------------------------------------------------
// INI config: [section] headers, key=value lines, '#' or ';' comments.

using IniSections =
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>;

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

IniSections parse_ini(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    IniSections out;
    std::string current = "";
    out.push_back({current, {}});
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": malformed section header");
            current = trim(s.substr(1, s.size() - 2));
            out.push_back({current, {}});
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key=value");
        out.back().second.push_back({trim(s.substr(0, eq)), trim(s.substr(eq + 1))});
    }
    return out;
}

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': bad integer '" + v + "'");
    }
}

double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': bad number '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw UsageError("config key '" + key + "': bad boolean '" + v + "'");
}

LearningRule parse_rule(const std::string& v) {
    if (v == "minpairflip") return LearningRule::MinPairFlip;
    if (v == "allpairs") return LearningRule::AllPairs;
    if (v == "noflip") return LearningRule::NoFlip;
    if (v == "layerminimal") return LearningRule::LayerMinimal;
    if (v == "spikingscalar") return LearningRule::SpikingScalar;
    throw UsageError("unknown learning rule '" + v + "'");
}

void apply_config(const IniSections& ini, TrainConfig& cfg, double& val_fraction) {
    for (const auto& [section, kvs] : ini) {
        for (const auto& [key, val] : kvs) {
            if (section == "model") {
                if (key == "kind") {
                    if (val == "rnn") cfg.kind = ModelKind::Rnn;
                    else if (val == "transformer") cfg.kind = ModelKind::Transformer;
                    else throw UsageError("config key 'kind': unknown model kind '" + val + "'");
                } else if (key == "n") {
                    cfg.n = cfg.transformer.n = static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "n_inp") {
                    cfg.n_inp = cfg.transformer.n_inp =
                        static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "n_t") {
                    cfg.n_t = cfg.transformer.n_t = static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "n_c") {
                    cfg.n_c = cfg.transformer.n_c = static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "unembed_n_t") {
                    cfg.unembed_n_t = cfg.transformer.unembed_n_t =
                        static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "unembed_n_c") {
                    cfg.unembed_n_c = cfg.transformer.unembed_n_c =
                        static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "combine") {
                    if (val == "add") cfg.combine = RnnCombine::AddAfterLut;
                    else if (val == "concat") cfg.combine = RnnCombine::ConcatInput;
                    else throw UsageError("config key 'combine': expected add|concat");
                } else if (key == "layers") {
                    cfg.transformer.layers = static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "heads") {
                    cfg.transformer.heads = static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "p") {
                    cfg.transformer.p = static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "ffn") {
                    cfg.transformer.ffn_enabled = to_bool(key, val);
                } else if (key == "ffn_n_t") {
                    cfg.transformer.ffn_n_t = static_cast<uint32_t>(to_u64(key, val));
                } else if (key == "ffn_n_c") {
                    cfg.transformer.ffn_n_c = static_cast<uint32_t>(to_u64(key, val));
                } else {
                    throw UsageError("unknown config key '[model] " + key + "'");
                }
            } else if (section == "train") {
                if (key == "rule") cfg.rule = parse_rule(val);
                else if (key == "lr_scale") cfg.lr_scale = static_cast<float>(to_f64(key, val));
                else if (key == "warmup_steps") cfg.warmup_steps = to_u64(key, val);
                else if (key == "lr_constant") cfg.lr_constant = to_bool(key, val);
                else if (key == "batch_size") cfg.batch_size = static_cast<uint32_t>(to_u64(key, val));
                else if (key == "max_steps") cfg.max_steps = to_u64(key, val);
                else if (key == "eval_interval") cfg.eval_interval = to_u64(key, val);
                else if (key == "max_eval_windows")
                    cfg.max_eval_windows = static_cast<uint32_t>(to_u64(key, val));
                else if (key == "seed") cfg.seed = to_u64(key, val);
                else if (key == "stop_bpc") cfg.stop_bpc = to_f64(key, val);
                else if (key == "threads") cfg.threads = static_cast<uint32_t>(to_u64(key, val));
                else if (key == "checkpoint_interval") cfg.checkpoint_interval = to_u64(key, val);
                else throw UsageError("unknown config key '[train] " + key + "'");
            } else if (section == "data") {
                if (key == "val_fraction") val_fraction = to_f64(key, val);
                else throw UsageError("unknown config key '[data] " + key + "'");
            } else {
                throw UsageError("unknown config section '[" + section + "]' (key '" +
                                 key + "')");
            }
        }
    }
}

uint32_t env_threads() {
    const char* e = std::getenv("POLYCHRON_THREADS");
    if (!e) return 0;
    return static_cast<uint32_t>(std::strtoul(e, nullptr, 10));
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& resume_path,
              int64_t seed_override, int64_t threads_override,
              int64_t max_steps_override) {
    TrainConfig cfg;
    double val_fraction = 0.1;
    uint64_t start_step = 0;
    LanguageModel model;

    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path);
        cfg = ck.config;
        start_step = ck.step;
        model = std::move(ck.model);
    }
    if (!config_path.empty()) apply_config(parse_ini(config_path), cfg, val_fraction);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (threads_override >= 0) cfg.threads = static_cast<uint32_t>(threads_override);
    else if (uint32_t et = env_threads()) cfg.threads = et;
    if (max_steps_override >= 0) cfg.max_steps = static_cast<uint64_t>(max_steps_override);
    if (resume_path.empty()) model = make_model(cfg);

    Corpus corpus = load_corpus(data_path, val_fraction);
    corpus.n_inp = cfg.kind == ModelKind::Rnn ? cfg.n_inp : cfg.transformer.n_inp;

    std::filesystem::create_directories(out_dir);
    uint64_t last_step = start_step;
    auto hook = [&](const CurvePoint& pt) {
        std::printf("step %llu train_loss_nats %.6f val_bpc %.6f\n",
                    static_cast<unsigned long long>(pt.step), pt.train_loss_nats,
                    pt.val_bpc);
        std::fflush(stdout);
        last_step = pt.step;
        if (cfg.checkpoint_interval > 0 && pt.step > 0 &&
            pt.step % cfg.checkpoint_interval == 0) {
            save_checkpoint(out_dir + "/step_" + std::to_string(pt.step) + ".ckpt",
                            model, cfg, pt.step);
        }
    };
    std::vector<CurvePoint> curve = train_loop(model, corpus, cfg, start_step, hook);
    write_curve_csv(out_dir + "/curve.csv", curve);
    if (!curve.empty()) last_step = curve.back().step;
    save_checkpoint(out_dir + "/step_" + std::to_string(last_step) + ".ckpt", model,
                    cfg, last_step);
    return 0;
}

// ---------------------------------------------------------------------------
// eval / generate

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             double val_fraction, uint32_t max_windows) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    Corpus corpus = load_corpus(data_path, val_fraction);
    corpus.n_inp =
        ck.config.kind == ModelKind::Rnn ? ck.config.n_inp : ck.config.transformer.n_inp;
    double bpc = evaluate(ck.model, corpus, max_windows);
    std::printf("val_bpc %.6f\n", bpc);
    return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& prompt,
                 uint64_t length, double temperature, uint64_t seed) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    std::vector<uint8_t> p(prompt.begin(), prompt.end());
    std::vector<uint8_t> out;
    if (std::holds_alternative<SpikingRnn>(ck.model))
        out = rnn_generate(std::get<SpikingRnn>(ck.model), p, length,
                           static_cast<float>(temperature), seed);
    else
        out = transformer_generate(std::get<SnnTransformer>(ck.model), p, length,
                                   static_cast<float>(temperature), seed);
    std::fwrite(out.data(), 1, out.size(), stdout);
    return 0;
}

// ---------------------------------------------------------------------------
// selftest suites

std::mt19937_64 st_rng(20240817);

void fill_rows(LutTransform& t, std::mt19937_64& rng) {
    std::normal_distribution<float> d(0.0f, 1.0f);
    for (auto& table : t.tables)
        for (auto& v : table.rows) v = d(rng);
}

// Double-precision re-evaluation of the surrogate transform for FD oracles.
double surrogate_loss_f64(const LutTransform& t, const std::vector<double>& x,
                          const std::vector<float>& w, double* min_abs_u) {
    std::vector<double> y(t.n_out, 0.0);
    if (t.residual)
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] = x[k];
    double mn = 1e300;
    for (const auto& table : t.tables) {
        const AnchorSet& s = table.anchors;
        uint32_t n_c = s.comparison_count();
        uint64_t j = 0;
        uint32_t r_min = 0;
        double u_min = 0.0;
        for (uint32_t r = 0; r < n_c; ++r) {
            double u = x[s.a[r]] - x[s.b[r]];
            j = (j << 1) | (u > 0.0 ? 1u : 0u);
            if (r == 0 || std::fabs(u) < std::fabs(u_min)) {
                r_min = r;
                u_min = u;
            }
            mn = std::min(mn, std::fabs(u));
        }
        uint64_t jbar = j ^ (uint64_t{1} << (n_c - 1 - r_min));
        const float* row = table.row(j);
        const float* flip = table.row(jbar);
        double uu = 0.5 / (1.0 + std::fabs(u_min));
        for (uint32_t k = 0; k < t.n_out; ++k)
            y[k] += row[k] + uu * (flip[k] - row[k]);
    }
    if (min_abs_u) *min_abs_u = mn;
    double loss = 0.0;
    for (uint32_t k = 0; k < t.n_out; ++k) loss += w[k] * y[k];
    return loss;
}

bool suite_gradient_check() {
    int done = 0;
    for (int attempt = 0; attempt < 500 && done < 25; ++attempt) {
        LutTransform t = make_lut_transform(6, 6, 2, 3, attempt % 2 == 0,
                                            HashMode::PairwiseSign, st_rng());
        fill_rows(t, st_rng);
        std::normal_distribution<float> d(0.0f, 1.0f);
        std::vector<float> x(6), w(6), y(6);
        for (auto& v : x) v = d(st_rng);
        for (auto& v : w) v = d(st_rng);
        std::vector<double> xd(x.begin(), x.end());
        double mn = 0.0;
        surrogate_loss_f64(t, xd, w, &mn);
        if (mn < 1e-2) continue;
        std::vector<MinPair> cache;
        surrogate_forward(t, x, y, &cache);
        std::vector<float> v_in(6);
        RowGradBuffer grads;
        grads.init(t);
        backward_lut(t, cache, w, v_in, grads);
        const double h = 1e-5;
        for (uint32_t k = 0; k < 6; ++k) {
            std::vector<double> xp = xd, xm = xd;
            xp[k] += h;
            xm[k] -= h;
            double g = (surrogate_loss_f64(t, xp, w, nullptr) -
                        surrogate_loss_f64(t, xm, w, nullptr)) /
                       (2 * h);
            if (std::fabs(v_in[k] - g) > 1e-3 * std::max(1.0, std::fabs(g)))
                return false;
        }
        ++done;
    }
    return done >= 25;
}

bool suite_cache_equivalence() {
    std::normal_distribution<float> d(0.0f, 1.0f);
    for (int inst = 0; inst < 200; ++inst) {
        AttentionHead head = make_attention_head(6, 3, 2, 2, 5, st_rng());
        uint32_t T = 5;
        std::vector<float> z(size_t{T} * head.n);
        for (auto& v : z) v = d(st_rng);
        VIndexCache cache;
        build_v_index_cache(head, z, T, cache);
        std::vector<float> concat(2 * head.n + head.p);
        for (uint32_t i = 1; i < T; ++i)
            for (uint32_t j = 0; j < i; ++j)
                for (uint32_t t = 0; t < head.tables.size(); ++t) {
                    std::copy(z.begin() + size_t{i} * head.n,
                              z.begin() + size_t{i + 1} * head.n, concat.begin());
                    std::copy(z.begin() + size_t{j} * head.n,
                              z.begin() + size_t{j + 1} * head.n,
                              concat.begin() + head.n);
                    auto pe = head.pe_row(i - j);
                    std::copy(pe.begin(), pe.end(), concat.begin() + 2 * head.n);
                    if (attn_pair_index(head, cache, t, i, j) !=
                        attn_pair_index_direct(head.tables[t], concat))
                        return false;
                }
    }
    return true;
}

bool suite_fine_tune_noop() {
    std::normal_distribution<float> d(0.0f, 1.0f);
    for (int inst = 0; inst < 50; ++inst) {
        LutTransform t = make_lut_transform(8, 8, 3, 3, inst % 2 == 0,
                                            HashMode::PairwiseSign, st_rng());
        fill_rows(t, st_rng);
        std::vector<float> x(8), before(8), after(8);
        for (auto& v : x) v = d(st_rng);
        lut_forward(t, x, before);
        LutTransform added = t;
        fine_tune_add_table(added, st_rng(), true);
        lut_forward(added, x, after);
        if (std::memcmp(before.data(), after.data(), sizeof(float) * 8) != 0)
            return false;
        LutTransform split = t;
        fine_tune_split_table(split, 1, 0, 5, true);
        lut_forward(split, x, after);
        if (std::memcmp(before.data(), after.data(), sizeof(float) * 8) != 0)
            return false;
    }
    return true;
}

bool suite_counter_match() {
    {
        SpikingRnn rnn = make_spiking_rnn(64, 64, 10, 64, 6, 7);
        std::vector<uint8_t> tokens(8);
        for (size_t i = 0; i < tokens.size(); ++i) tokens[i] = uint8_t(i * 31);
        Counters c = measure_rnn_window(rnn, tokens);
        ResourceReport r = snn_rnn_report(64, 64, 10, 64, 6);
        uint64_t T = tokens.size();
        if (c.rows_loaded != T * r.get("per_token", "rows_loaded")) return false;
        if (c.comparisons != T * r.get("per_token", "comparisons")) return false;
        if (c.multiplications != 0) return false;
    }
    {
        SnnTransformerConfig tc;
        tc.n = 16;
        tc.n_inp = 8;
        tc.layers = 2;
        tc.heads = 1;
        tc.n_t = 4;
        tc.n_c = 3;
        tc.p = 2;
        tc.ffn_enabled = false;
        tc.unembed_n_t = 4;
        tc.unembed_n_c = 3;
        SnnTransformer m = make_snn_transformer(tc, 11);
        std::vector<uint8_t> tokens(tc.n_inp);
        for (size_t i = 0; i < tokens.size(); ++i) tokens[i] = uint8_t(i * 17);
        Counters c = measure_transformer_window(m, tokens);
        ResourceReport r = snn_transformer_report(tc.n, tc.n_t, tc.n_c, tc.p,
                                                  tc.n_inp, tc.heads, tc.layers,
                                                  false, tc.unembed_n_t,
                                                  tc.unembed_n_c);
        if (c.comparisons != r.get("model", "comparisons")) return false;
        if (c.rows_loaded != r.get("model", "rows_loaded")) return false;
        if (c.multiplications != 0) return false;
    }
    return true;
}

int cmd_selftest() {
    struct Suite {
        const char* name;
        bool (*fn)();
    } suites[] = {
        {"gradient-check", suite_gradient_check},
        {"cache-equivalence", suite_cache_equivalence},
        {"fine-tune-no-op", suite_fine_tune_noop},
        {"counter-match", suite_counter_match},
    };
    bool ok = true;
    for (const auto& s : suites) {
        bool pass = s.fn();
        std::printf("[%s] %s\n", pass ? "PASS" : "FAIL", s.name);
        ok = ok && pass;
    }
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LUT spiking network toolkit"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a model on a byte corpus");
    std::string tr_config, tr_data, tr_out, tr_resume;
    int64_t tr_seed = -1, tr_threads = -1, tr_max_steps = -1;
    train->add_option("--config", tr_config, "INI config file");
    train->add_option("--data", tr_data, "corpus file (raw bytes)")->required();
    train->add_option("--out", tr_out, "output directory")->required();
    train->add_option("--resume", tr_resume, "checkpoint to resume from");
    train->add_option("--seed", tr_seed, "seed override");
    train->add_option("--threads", tr_threads,
                      "batch-parallel worker count (env POLYCHRON_THREADS)");
    train->add_option("--max-steps", tr_max_steps, "step count override");

    // eval
    auto* eval = app.add_subcommand("eval", "report validation BPC");
    std::string ev_ckpt, ev_data;
    double ev_val_fraction = 0.1;
    uint32_t ev_max_windows = 0;
    eval->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
    eval->add_option("--data", ev_data, "corpus file")->required();
    eval->add_option("--val-fraction", ev_val_fraction, "validation tail fraction");
    eval->add_option("--max-windows", ev_max_windows, "window cap (0 = all)");

    // generate
    auto* gen = app.add_subcommand("generate", "sample bytes from a checkpoint");
    std::string g_ckpt, g_prompt;
    uint64_t g_len = 256, g_seed = 1;
    double g_temp = 1.0;
    gen->add_option("--ckpt", g_ckpt, "checkpoint file")->required();
    gen->add_option("--prompt", g_prompt, "prompt string");
    gen->add_option("--len", g_len, "bytes to generate");
    gen->add_option("--temp", g_temp, "softmax temperature (> 0)");
    gen->add_option("--seed", g_seed, "sampling seed");

    // resources
    auto* res = app.add_subcommand("resources", "print analytic cost tables");
    std::string r_model = "rnn";
    bool r_csv = false;
    uint32_t r_n = 0, r_n_t = 0, r_n_c = 0, r_un_t = 0, r_un_c = 0;
    uint32_t r_p = 4, r_n_inp = 32, r_heads = 1, r_layers = 6;
    bool r_ffn = false;
    uint32_t r_d_model = 512, r_d_k = 64, r_d_ff = 2048;
    res->add_option("--model", r_model, "rnn | snn-transformer | ann-transformer")
        ->check(CLI::IsMember({"rnn", "snn-transformer", "ann-transformer"}));
    res->add_flag("--csv", r_csv, "emit CSV instead of the text table");
    res->add_option("--n", r_n, "embedding dimension");
    res->add_option("--n-t", r_n_t, "tables per transform");
    res->add_option("--n-c", r_n_c, "comparisons per table");
    res->add_option("--unembed-n-t", r_un_t, "unembedder tables");
    res->add_option("--unembed-n-c", r_un_c, "unembedder comparisons");
    res->add_option("--p", r_p, "positional-encoder dimension");
    res->add_option("--n-inp", r_n_inp, "context length");
    res->add_option("--heads", r_heads, "attention heads per layer");
    res->add_option("--layers", r_layers, "layer count");
    res->add_flag("--ffn", r_ffn, "include the feedforward transform");
    res->add_option("--d-model", r_d_model, "ANN model dimension");
    res->add_option("--d-k", r_d_k, "ANN key dimension");
    res->add_option("--d-ff", r_d_ff, "ANN feedforward dimension");

    // capacity
    auto* cap = app.add_subcommand("capacity", "distinguishable-pattern capacity");
    uint32_t c_n_t = 0, c_n_c = 0, c_fact = 0, c_bin_n = 0, c_bin_m = 0;
    auto* cap_nt = cap->add_option("--n-t", c_n_t, "tables");
    auto* cap_nc = cap->add_option("--n-c", c_n_c, "comparisons per table");
    auto* cap_f = cap->add_option("--factorial", c_fact, "log10 of n!");
    auto* cap_bn = cap->add_option("--binned-n", c_bin_n, "neurons (binned)");
    auto* cap_bm = cap->add_option("--binned-m", c_bin_m, "bins per neuron");
    cap_nt->needs(cap_nc);
    cap_bn->needs(cap_bm);

    auto* self = app.add_subcommand("selftest", "run the built-in check suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (train->parsed())
            return cmd_train(tr_config, tr_data, tr_out, tr_resume, tr_seed,
                             tr_threads, tr_max_steps);
        if (eval->parsed())
            return cmd_eval(ev_ckpt, ev_data, ev_val_fraction, ev_max_windows);
        if (gen->parsed()) {
            if (g_temp <= 0.0) {
                std::cerr << "error: --temp must be > 0\n";
                return 2;
            }
            return cmd_generate(g_ckpt, g_prompt, g_len, g_temp, g_seed);
        }
        if (res->parsed()) {
            ResourceReport report;
            if (r_model == "rnn") {
                report = snn_rnn_report(r_n ? r_n : 64, r_n_t ? r_n_t : 64,
                                        r_n_c ? r_n_c : 10, r_un_t ? r_un_t : 64,
                                        r_un_c ? r_un_c : 6);
            } else if (r_model == "snn-transformer") {
                report = snn_transformer_report(
                    r_n ? r_n : 16, r_n_t ? r_n_t : 10, r_n_c ? r_n_c : 6, r_p,
                    r_n_inp, r_heads, r_layers, r_ffn, r_un_t ? r_un_t : 16,
                    r_un_c ? r_un_c : 6);
            } else {
                AnnTransformerConfig cfg;
                cfg.d_model = r_d_model;
                cfg.d_k = r_d_k;
                cfg.d_ff = r_d_ff;
                cfg.n_inp = r_n_inp;
                cfg.layers = r_layers;
                report = ann_transformer_report(cfg);
            }
            std::cout << (r_csv ? report_csv(report) : report_text(report));
            return 0;
        }
        if (cap->parsed()) {
            bool any = false;
            if (*cap_nt) {
                std::printf("capacity_bits %.0f\n", capacity(c_n_t, c_n_c));
                any = true;
            }
            if (*cap_f) {
                std::printf("factorial_log10 %.6f\n", factorial_capacity(c_fact));
                any = true;
            }
            if (*cap_bn) {
                std::printf("binned_log10 %.6f\n", binned_capacity(c_bin_n, c_bin_m));
                any = true;
            }
            if (!any) {
                std::cerr << "error: give --n-t/--n-c, --factorial, or "
                             "--binned-n/--binned-m\n";
                return 2;
            }
            return 0;
        }
        if (self->parsed()) return cmd_selftest();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
