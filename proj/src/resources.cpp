#include "polychron/resources.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace polychron {

namespace {

uint64_t checked(unsigned __int128 v) {
    if (v > std::numeric_limits<uint64_t>::max())
        throw std::overflow_error("resource count exceeds 64 bits");
    return static_cast<uint64_t>(v);
}

uint64_t mul(uint64_t a, uint64_t b) {
    return checked(static_cast<unsigned __int128>(a) * b);
}

uint64_t pow2(uint32_t e) {
    if (e >= 64) throw std::overflow_error("2^e exceeds 64 bits");
    return uint64_t{1} << e;
}

} // namespace

uint64_t ResourceReport::get(const std::string& component,
                             const std::string& metric) const {
    for (const auto& e : entries)
        if (e.component == component && e.metric == metric) return e.value;
    throw std::out_of_range("no report entry " + component + "/" + metric);
}

bool ResourceReport::has(const std::string& component,
                         const std::string& metric) const {
    for (const auto& e : entries)
        if (e.component == component && e.metric == metric) return true;
    return false;
}

void ResourceReport::add(std::string component, std::string metric,
                         uint64_t value) {
    entries.push_back({std::move(component), std::move(metric), value});
}

ResourceReport snn_rnn_report(uint32_t n, uint32_t n_t, uint32_t n_c,
                              uint32_t n_t_u, uint32_t n_c_u) {
    ResourceReport r;
    uint64_t s_fp = mul(mul(n_t, pow2(n_c)), n);
    uint64_t s_bw = mul(2 * uint64_t{n_t}, n_c) + mul(n_t, n);
    uint64_t u_fp = mul(mul(n_t_u, pow2(n_c_u)), 256);
    uint64_t u_bw = mul(2 * uint64_t{n_t_u}, n_c_u) + mul(n_t_u, 256);
    uint64_t e_fp = mul(256, n);
    r.add("S", "footprint", s_fp);
    r.add("S", "bandwidth_per_token", s_bw);
    r.add("Uh", "footprint", u_fp);
    r.add("Uh", "bandwidth_per_token", u_bw);
    r.add("E", "footprint", e_fp);
    r.add("E", "bandwidth_per_token", n);
    r.add("total", "footprint", s_fp + u_fp + e_fp);
    r.add("total", "bandwidth_per_token", s_bw + u_bw + n);
    // Per-token compute of the inference path.
    r.add("per_token", "comparisons", mul(n_t, n_c) + mul(n_t_u, n_c_u));
    r.add("per_token", "rows_loaded", uint64_t{n_t} + n_t_u);
    r.add("per_token", "summations", mul(n_t, n) + mul(n_t_u, 256) + n);
    r.add("per_token", "multiplications", 0);
    return r;
}

ResourceReport snn_transformer_report(uint32_t n, uint32_t n_t, uint32_t n_c,
                                      uint32_t p, uint32_t n_inp, uint32_t heads,
                                      uint32_t layers, bool ffn_enabled,
                                      uint32_t unembed_n_t, uint32_t unembed_n_c) {
    ResourceReport r;
    // Per layer per head.
    uint64_t attn_fp = mul(mul(n_t, pow2(2 * n_c + p)), n);
    uint64_t ffn_fp = mul(mul(n_t, pow2(n_c)), n);
    uint64_t attn_sum = mul(mul(n_t, n), mul(n_inp, n_inp));
    uint64_t ffn_sum = mul(mul(n_t, n), n_inp);
    uint64_t cmp = mul(2 * uint64_t{n_t}, mul(n_c, n_inp));
    uint64_t bw_fixed = mul(2 * uint64_t{n_t}, n_c);
    uint64_t bw_slope = 3 * uint64_t{n_t};
    r.add("attention", "footprint", attn_fp);
    r.add("attention", "summations", attn_sum);
    r.add("attention", "comparisons", cmp);
    r.add("ffn", "footprint", ffn_fp);
    r.add("ffn", "summations", ffn_sum);
    r.add("per_layer_head", "footprint", attn_fp + ffn_fp);
    r.add("per_layer_head", "compute", attn_sum + ffn_sum + cmp);
    r.add("per_layer_head", "bandwidth_fixed", bw_fixed);
    r.add("per_layer_head", "bandwidth_slope", bw_slope);
    r.add("per_layer_head", "bandwidth",
          bw_fixed + mul(bw_slope, n_inp));
    // Exact row/comparison counts of the implemented forward, per layer per
    // head, for a window of n_inp tokens (for counter cross-checks).
    r.add("per_layer_head", "rows_loaded",
          mul(n_t, mul(n_inp, n_inp - 1) / 2));
    // Whole model.
    uint64_t lh = mul(layers, heads);
    uint64_t model_fp = mul(lh, attn_fp);
    if (ffn_enabled) model_fp += mul(layers, ffn_fp);
    uint64_t embed_fp = mul(256, n);
    uint64_t unembed_fp = mul(mul(unembed_n_t, pow2(unembed_n_c)), 256);
    r.add("model", "attention_footprint", mul(lh, attn_fp));
    r.add("model", "ffn_footprint", ffn_enabled ? mul(layers, ffn_fp) : 0);
    r.add("model", "embedder_footprint", embed_fp);
    r.add("model", "unembedder_footprint", unembed_fp);
    r.add("model", "footprint", model_fp + embed_fp + unembed_fp);
    r.add("model", "comparisons",
          mul(lh, cmp) + mul(mul(unembed_n_t, unembed_n_c), n_inp));
    uint64_t model_rows = mul(lh, mul(n_t, mul(n_inp, n_inp - 1) / 2)) +
                          mul(unembed_n_t, n_inp);
    if (ffn_enabled) model_rows += mul(layers, mul(n_t, n_inp));
    r.add("model", "rows_loaded", model_rows);
    r.add("model", "multiplications", 0);
    return r;
}

ResourceReport ann_transformer_report(const AnnTransformerConfig& cfg) {
    ResourceReport r;
    uint64_t dm2 = mul(cfg.d_model, cfg.d_model);
    uint64_t ni2 = mul(cfg.n_inp, cfg.n_inp);
    uint64_t qkt = mul(2 * uint64_t{cfg.d_k}, ni2) + mul(2 * dm2, cfg.n_inp);
    uint64_t vo = mul(2 * uint64_t{cfg.d_k}, ni2) + mul(4 * dm2, cfg.n_inp);
    uint64_t ffn = mul(8 * dm2, cfg.n_inp);
    // Multiplication and summation counts are equal for each stage.
    r.add("qkt", "multiplications", qkt);
    r.add("qkt", "summations", qkt);
    r.add("vo", "multiplications", vo);
    r.add("vo", "summations", vo);
    r.add("ffn", "multiplications", ffn);
    r.add("ffn", "summations", ffn);
    r.add("per_layer", "compute", 2 * (qkt + vo + ffn));
    r.add("per_layer", "footprint", 12 * dm2);
    uint64_t bw_fixed = 4 * dm2;
    uint64_t bw_slope = uint64_t{cfg.d_k} + cfg.d_model;
    r.add("per_layer", "bandwidth_fixed", bw_fixed);
    r.add("per_layer", "bandwidth_slope", bw_slope);
    r.add("per_layer", "bandwidth", bw_fixed + mul(bw_slope, cfg.n_inp));
    r.add("model", "footprint", mul(12 * dm2, cfg.layers));
    r.add("model", "compute", mul(2 * (qkt + vo + ffn), cfg.layers));
    return r;
}

double capacity(uint32_t n_t, uint32_t n_c) {
    return static_cast<double>(n_t) * n_c;
}

double factorial_capacity(uint32_t n) {
    return std::lgamma(static_cast<double>(n) + 1.0) / std::log(10.0);
}

double binned_capacity(uint32_t n, uint32_t m) {
    return static_cast<double>(n) * std::log10(static_cast<double>(m));
}

Counters measure_rnn_window(const SpikingRnn& model,
                            std::span<const uint8_t> tokens) {
    Counters c;
    std::vector<float> logits;
    rnn_forward(model, tokens, logits, nullptr, &c);
    return c;
}

Counters measure_transformer_window(const SnnTransformer& model,
                                    std::span<const uint8_t> tokens) {
    Counters c;
    std::vector<float> logits;
    transformer_forward(model, tokens, logits, nullptr, ForwardMode::Discrete, &c);
    return c;
}

ResourceReport measured_report(const Counters& c) {
    ResourceReport r;
    r.add("measured", "comparisons", c.comparisons);
    r.add("measured", "sign_tests", c.sign_tests);
    r.add("measured", "summations", c.additions);
    r.add("measured", "multiplications", c.multiplications);
    r.add("measured", "dot_products", c.dot_products);
    r.add("measured", "rows_loaded", c.rows_loaded);
    r.add("measured", "values_loaded", c.values_loaded);
    return r;
}

std::string report_text(const ResourceReport& r) {
    size_t wc = 9, wm = 6;
    for (const auto& e : r.entries) {
        wc = std::max(wc, e.component.size());
        wm = std::max(wm, e.metric.size());
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(wc + 2)) << "component"
       << std::setw(static_cast<int>(wm + 2)) << "metric" << "value\n";
    for (const auto& e : r.entries)
        os << std::left << std::setw(static_cast<int>(wc + 2)) << e.component
           << std::setw(static_cast<int>(wm + 2)) << e.metric << e.value << "\n";
    return os.str();
}

std::string report_csv(const ResourceReport& r) {
    std::ostringstream os;
    os << "component,metric,value\n";
    for (const auto& e : r.entries)
        os << e.component << "," << e.metric << "," << e.value << "\n";
    return os.str();
}

} // namespace polychron
