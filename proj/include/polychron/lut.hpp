#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "polychron/counters.hpp"

namespace polychron {

// A spiking pattern as relative spike times. No scale or unit is implied;
// only finite values are valid.
using LatencyVector = std::vector<float>;

enum class HashMode : uint32_t {
    PairwiseSign = 0,  // bit r: x[a_r] - x[b_r] > 0
    BinQuantized = 1,  // digit r: temporal bin of x[a_r], base m
    HyperplaneSign = 2, // bit r: c_r . x > 0
    ComponentSign = 3, // bit r: x[a_r] > 0
};

struct AnchorSet {
    HashMode mode = HashMode::PairwiseSign;
    std::vector<uint32_t> a; // PairwiseSign: first of each pair; also reused as `singles`
    std::vector<uint32_t> b; // PairwiseSign: second of each pair
    std::vector<std::vector<float>> planes; // HyperplaneSign
    uint32_t bins = 2;       // BinQuantized: m
    float bin_lo = -1.0f;
    float bin_hi = 1.0f;

    uint32_t comparison_count() const;
    uint64_t row_count() const; // 2^n_c, or m^n_c for BinQuantized
};

// One table: an anchor set plus row_count rows of synaptic vectors,
// stored row-major as row_count * n_out floats.
struct LookupTable {
    AnchorSet anchors;
    std::vector<float> rows;
    uint32_t n_out = 0;

    uint64_t row_count() const { return anchors.row_count(); }
    float* row(uint64_t j) { return rows.data() + j * n_out; }
    const float* row(uint64_t j) const { return rows.data() + j * n_out; }
};

// Bank of n_t tables implementing y = (residual ? x : 0) + sum_i S_i[j_i(x)].
struct LutTransform {
    std::vector<LookupTable> tables;
    uint32_t n_in = 0;
    uint32_t n_out = 0;
    bool residual = false;
    // Fine-tuning: when >= 0, gradients flow only through this table index.
    int32_t trainable_only = -1;

    uint32_t table_count() const { return static_cast<uint32_t>(tables.size()); }
};

// Cached per-table result of an index computation: the selected row j plus
// the comparison whose latency difference is closest to zero.
struct MinPair {
    uint64_t j = 0;
    uint32_t r_min = 0;
    float u_min = 0.0f;
};

// All-pairs variant: j plus every comparison's u value, for the AllPairs rule.
struct FullIndexCache {
    uint64_t j = 0;
    std::vector<float> u; // one per comparison
};

AnchorSet init_anchor_set(uint32_t n_in, uint32_t n_c, HashMode mode, uint64_t seed);

// Builds an n_in -> n_out transform with n_t tables, zero-initialized rows.
// Anchor seeds are derived deterministically from `seed` per table.
LutTransform make_lut_transform(uint32_t n_in, uint32_t n_out, uint32_t n_t,
                                uint32_t n_c, bool residual, HashMode mode,
                                uint64_t seed);

// The u value of comparison r: latency difference, plane projection, component
// value, or distance to the nearest interior bin edge.
float comparison_value(const AnchorSet& anchors, std::span<const float> x, uint32_t r,
                       Counters* counters = nullptr);

uint64_t compute_index(const LookupTable& table, std::span<const float> x,
                       Counters* counters = nullptr);

MinPair compute_index_cached(const LookupTable& table, std::span<const float> x,
                             Counters* counters = nullptr);

FullIndexCache compute_index_full(const LookupTable& table, std::span<const float> x);

// j with bit r flipped, MSB-first: comparison 0 owns the most significant bit.
uint64_t flip_bit(uint64_t j, uint32_t r, uint32_t n_bits);

// The row adjacent to cache.j across the boundary of comparison cache.r_min.
// Sign modes flip the bit; BinQuantized steps the digit across the nearest edge.
uint64_t neighbor_index(const LookupTable& table, const MinPair& cache);

void lut_forward(const LutTransform& t, std::span<const float> x, std::span<float> y,
                 Counters* counters = nullptr);

// Forward pass that also fills one MinPair per table (Fig-8-style caching).
void lut_forward_cached(const LutTransform& t, std::span<const float> x,
                        std::span<float> y, std::vector<MinPair>& cache,
                        Counters* counters = nullptr);

} // namespace polychron
