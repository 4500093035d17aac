#pragma once

#include <cstdint>

namespace polychron {

// Per-invocation operation accounting. Passed as an optional pointer through
// the forward/backward paths; a null pointer disables counting.
struct Counters {
    uint64_t comparisons = 0;     // pairwise latency comparisons (and plane projections)
    uint64_t sign_tests = 0;      // single-value sign / bin tests (ComponentSign, BinQuantized)
    uint64_t additions = 0;       // data-value additions (row summation, residual)
    uint64_t multiplications = 0; // data-value multiplications (0 in SNN inference)
    uint64_t dot_products = 0;    // full vector dot products (backward alignment)
    uint64_t rows_loaded = 0;     // synaptic rows fetched from tables
    uint64_t flipped_rows_loaded = 0; // neighbor rows fetched in the backward pass
    uint64_t values_loaded = 0;   // individual values touched (anchors + rows)

    Counters& operator+=(const Counters& o) {
        comparisons += o.comparisons;
        sign_tests += o.sign_tests;
        additions += o.additions;
        multiplications += o.multiplications;
        dot_products += o.dot_products;
        rows_loaded += o.rows_loaded;
        flipped_rows_loaded += o.flipped_rows_loaded;
        values_loaded += o.values_loaded;
        return *this;
    }
};

} // namespace polychron
