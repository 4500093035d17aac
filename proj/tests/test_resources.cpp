#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "polychron/resources.hpp"

using namespace polychron;

TEST_CASE("rnn report: 64/64/10 + 64/6 reference figures") {
    ResourceReport r = snn_rnn_report(64, 64, 10, 64, 6);
    CHECK(r.get("S", "footprint") == 4194304);
    CHECK(r.get("S", "bandwidth_per_token") == 5376);
    CHECK(r.get("Uh", "footprint") == 1048576);
    CHECK(r.get("Uh", "bandwidth_per_token") == 17152);
    CHECK(r.get("E", "footprint") == 16384);
    CHECK(r.get("E", "bandwidth_per_token") == 64);
    CHECK(r.get("total", "footprint") == 5259264);
    CHECK(r.get("total", "bandwidth_per_token") == 5376 + 17152 + 64);
    CHECK(r.get("per_token", "comparisons") == 64 * 10 + 64 * 6);
    CHECK(r.get("per_token", "rows_loaded") == 128);
    CHECK(r.get("per_token", "multiplications") == 0);
}

TEST_CASE("rnn report scaling: one more comparison doubles the table") {
    ResourceReport a = snn_rnn_report(64, 64, 10, 64, 6);
    ResourceReport b = snn_rnn_report(64, 64, 11, 64, 6);
    CHECK(b.get("S", "footprint") == 2 * a.get("S", "footprint"));
    CHECK(b.get("S", "bandwidth_per_token") ==
          a.get("S", "bandwidth_per_token") + 2 * 64);
    ResourceReport z = snn_rnn_report(64, 0, 10, 64, 6);
    CHECK(z.get("S", "footprint") == 0);
    CHECK(z.get("S", "bandwidth_per_token") == 0);
}

TEST_CASE("snn transformer report: 16/10/6 p=4 n_inp=32 reference figures") {
    ResourceReport r = snn_transformer_report(16, 10, 6, 4, 32, 1, 6, false);
    CHECK(r.get("attention", "footprint") == 10485760);
    CHECK(r.get("ffn", "footprint") == 10240);
    CHECK(r.get("per_layer_head", "footprint") == 10496000);
    CHECK(r.get("attention", "summations") == 163840);
    CHECK(r.get("ffn", "summations") == 5120);
    CHECK(r.get("attention", "comparisons") == 3840);
    CHECK(r.get("per_layer_head", "compute") == 172800);
    CHECK(r.get("per_layer_head", "bandwidth_fixed") == 120);
    CHECK(r.get("per_layer_head", "bandwidth_slope") == 30);
    CHECK(r.get("per_layer_head", "bandwidth") == 120 + 30 * 32);
    CHECK(r.get("model", "multiplications") == 0);
}

TEST_CASE("snn transformer report: large config lands within 1% of 806M") {
    ResourceReport r = snn_transformer_report(32, 16, 6, 4, 32, 4, 6, true, 16, 6);
    CHECK(r.get("model", "footprint") == 805773312);
    CHECK(std::fabs(double(r.get("model", "footprint")) - 806e6) / 806e6 < 0.01);
    CHECK(r.get("model", "attention_footprint") == 805306368);
    CHECK(r.get("model", "ffn_footprint") == 196608);
    CHECK(r.get("model", "embedder_footprint") == 8192);
    CHECK(r.get("model", "unembedder_footprint") == 262144);
}

TEST_CASE("snn transformer report: ffn rows counted in totals only when enabled") {
    ResourceReport off = snn_transformer_report(16, 10, 6, 4, 32, 1, 6, false);
    ResourceReport on = snn_transformer_report(16, 10, 6, 4, 32, 1, 6, true);
    CHECK(off.get("model", "ffn_footprint") == 0);
    CHECK(on.get("model", "ffn_footprint") == 6 * 10240);
    CHECK(on.get("model", "footprint") ==
          off.get("model", "footprint") + 6 * 10240);
    // Per-layer-head figures quote the FFN either way.
    CHECK(off.get("per_layer_head", "footprint") ==
          on.get("per_layer_head", "footprint"));
}

TEST_CASE("ann transformer report: 512/64/2048 reference figures") {
    AnnTransformerConfig cfg;
    ResourceReport r = ann_transformer_report(cfg);
    CHECK(r.get("per_layer", "compute") == 235405312);
    CHECK(r.get("per_layer", "footprint") == 3145728);
    CHECK(r.get("per_layer", "bandwidth_fixed") == 1048576);
    CHECK(r.get("per_layer", "bandwidth_slope") == 576);
    CHECK(r.get("per_layer", "bandwidth") == 1048576 + 576 * 32);
    CHECK(r.get("model", "footprint") == 6 * 3145728ULL);
    // Compute ratio against the SNN attention layer: about three orders.
    ResourceReport s = snn_transformer_report(16, 10, 6, 4, 32, 1, 6, false);
    double ratio = double(r.get("per_layer", "compute")) /
                   double(s.get("per_layer_head", "compute"));
    CHECK(ratio == doctest::Approx(1362.3).epsilon(0.001));
}

TEST_CASE("capacity measures") {
    CHECK(capacity(64, 10) == 640.0);
    CHECK(factorial_capacity(60) == doctest::Approx(81.92).epsilon(1e-3));
    CHECK(factorial_capacity(1) == doctest::Approx(0.0).scale(1.0));
    CHECK(binned_capacity(200, 10) == doctest::Approx(200.0));
    CHECK(binned_capacity(64, 2) == doctest::Approx(64.0 * std::log10(2.0)));
}

TEST_CASE("report overflow is detected, not wrapped") {
    CHECK_THROWS_AS(snn_transformer_report(16, 10, 40, 4, 32, 1, 6, false),
                    std::overflow_error);
}

TEST_CASE("measured rnn counters agree with the analytic report") {
    SpikingRnn m = make_spiking_rnn(64, 64, 10, 64, 6, 5);
    std::vector<uint8_t> tokens(8);
    for (size_t k = 0; k < 8; ++k) tokens[k] = static_cast<uint8_t>(40 + k);
    Counters c = measure_rnn_window(m, tokens);
    ResourceReport r = snn_rnn_report(64, 64, 10, 64, 6);
    CHECK(c.comparisons == 8 * r.get("per_token", "comparisons"));
    CHECK(c.rows_loaded == 8 * r.get("per_token", "rows_loaded"));
    CHECK(c.multiplications == 0);
    CHECK(c.dot_products == 0);
}

TEST_CASE("measured transformer counters agree with the analytic report") {
    SnnTransformerConfig cfg;
    cfg.n = 8;
    cfg.n_inp = 6;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.n_t = 2;
    cfg.n_c = 2;
    cfg.p = 2;
    cfg.unembed_n_t = 2;
    cfg.unembed_n_c = 3;
    SnnTransformer m = make_snn_transformer(cfg, 6);
    std::vector<uint8_t> tokens = {1, 2, 3, 4, 5, 6};
    Counters c = measure_transformer_window(m, tokens);
    ResourceReport r = snn_transformer_report(8, 2, 2, 2, 6, 2, 2, false, 2, 3);
    CHECK(c.comparisons == r.get("model", "comparisons"));
    CHECK(c.rows_loaded == r.get("model", "rows_loaded"));
    CHECK(c.multiplications == 0);
    // PE hashing uses sign tests, never latency comparisons.
    // layers * heads * tables * p * (T - 1) PE fragment bits.
    CHECK(c.sign_tests == uint64_t{2} * 2 * 2 * 2 * (6 - 1));
}

TEST_CASE("report rendering") {
    ResourceReport r;
    r.add("S", "footprint", 42);
    std::string text = report_text(r);
    CHECK(text.find("component") != std::string::npos);
    CHECK(text.find("42") != std::string::npos);
    std::string csv = report_csv(r);
    CHECK(csv == "component,metric,value\nS,footprint,42\n");
    CHECK(r.has("S", "footprint"));
    CHECK(!r.has("S", "bandwidth"));
    CHECK_THROWS_AS(r.get("S", "bandwidth"), std::out_of_range);
    ResourceReport mr = measured_report(Counters{});
    CHECK(mr.has("measured", "comparisons"));
    CHECK(mr.has("measured", "rows_loaded"));
}
