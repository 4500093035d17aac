#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polychron/counters.hpp"
#include "polychron/models.hpp"

namespace polychron {

// One (component, metric, value) line of a cost report. Values are exact
// integers; formulas use 128-bit intermediates to avoid overflow.
struct ReportEntry {
    std::string component;
    std::string metric;
    uint64_t value = 0;
};

struct ResourceReport {
    std::vector<ReportEntry> entries;

    // Throws if the pair is absent.
    uint64_t get(const std::string& component, const std::string& metric) const;
    bool has(const std::string& component, const std::string& metric) const;
    void add(std::string component, std::string metric, uint64_t value);
};

// Spiking RNN costs: footprint and per-token bandwidth for the recurrent
// transform S, the unembedder Uh and the embedder E, plus per-token compute.
ResourceReport snn_rnn_report(uint32_t n, uint32_t n_t, uint32_t n_c,
                              uint32_t n_t_u, uint32_t n_c_u);

// SNN transformer costs, scoped per layer per head (embedder/unembedder appear
// only in the whole-model totals). The per-layer figures always include the
// FFN rows; whole-model totals include the FFN only when it is enabled.
ResourceReport snn_transformer_report(uint32_t n, uint32_t n_t, uint32_t n_c,
                                      uint32_t p, uint32_t n_inp, uint32_t heads,
                                      uint32_t layers, bool ffn_enabled,
                                      uint32_t unembed_n_t = 16,
                                      uint32_t unembed_n_c = 6);

struct AnnTransformerConfig {
    uint32_t d_model = 512;
    uint32_t d_k = 64;
    uint32_t d_ff = 2048;
    uint32_t n_inp = 32;
    uint32_t layers = 6;
    uint32_t heads = 8;
};

// Conventional transformer costs per layer (analytic only; nothing is run).
ResourceReport ann_transformer_report(const AnnTransformerConfig& cfg);

// Distinguishable-pattern capacities, in log space.
double capacity(uint32_t n_t, uint32_t n_c);        // log2(2^{n_t n_c}) bits
double factorial_capacity(uint32_t n);              // log10(n!)
double binned_capacity(uint32_t n, uint32_t m);     // log10(m^n)

// Instrumented forward passes (inference mode). The counters must agree with
// the analytic reports for matching configs.
Counters measure_rnn_window(const SpikingRnn& model,
                            std::span<const uint8_t> tokens);
Counters measure_transformer_window(const SnnTransformer& model,
                                    std::span<const uint8_t> tokens);

// Measured counters rendered in the same report shape.
ResourceReport measured_report(const Counters& c);

std::string report_text(const ResourceReport& r);
std::string report_csv(const ResourceReport& r);

} // namespace polychron
