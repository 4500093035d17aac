#include "polychron/lut.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <stdexcept>

namespace polychron {

uint32_t AnchorSet::comparison_count() const {
    switch (mode) {
    case HashMode::PairwiseSign: return static_cast<uint32_t>(a.size());
    case HashMode::BinQuantized: return static_cast<uint32_t>(a.size());
    case HashMode::HyperplaneSign: return static_cast<uint32_t>(planes.size());
    case HashMode::ComponentSign: return static_cast<uint32_t>(a.size());
    }
    return 0;
}

uint64_t AnchorSet::row_count() const {
    uint32_t n_c = comparison_count();
    if (mode == HashMode::BinQuantized) {
        uint64_t rows = 1;
        for (uint32_t r = 0; r < n_c; ++r) rows *= bins;
        return rows;
    }
    return uint64_t{1} << n_c;
}

AnchorSet init_anchor_set(uint32_t n_in, uint32_t n_c, HashMode mode, uint64_t seed) {
    AnchorSet s;
    s.mode = mode;
    std::mt19937_64 rng(seed);
    switch (mode) {
    case HashMode::PairwiseSign: {
        if (n_in < 2)
            throw std::invalid_argument("PairwiseSign anchors need n_in >= 2");
        std::uniform_int_distribution<uint32_t> da(0, n_in - 1);
        std::uniform_int_distribution<uint32_t> db(0, n_in - 2);
        s.a.reserve(n_c);
        s.b.reserve(n_c);
        for (uint32_t r = 0; r < n_c; ++r) {
            uint32_t ar = da(rng);
            uint32_t br = db(rng);
            if (br >= ar) ++br; // uniform over ordered pairs with a != b
            s.a.push_back(ar);
            s.b.push_back(br);
        }
        break;
    }
    case HashMode::BinQuantized:
    case HashMode::ComponentSign: {
        std::uniform_int_distribution<uint32_t> d(0, n_in - 1);
        s.a.reserve(n_c);
        for (uint32_t r = 0; r < n_c; ++r) s.a.push_back(d(rng));
        break;
    }
    case HashMode::HyperplaneSign: {
        std::normal_distribution<float> d(0.0f, 1.0f);
        s.planes.resize(n_c);
        for (auto& plane : s.planes) {
            plane.resize(n_in);
            for (auto& c : plane) c = d(rng);
        }
        break;
    }
    }
    return s;
}

LutTransform make_lut_transform(uint32_t n_in, uint32_t n_out, uint32_t n_t,
                                uint32_t n_c, bool residual, HashMode mode,
                                uint64_t seed) {
    if (residual && n_in != n_out)
        throw std::invalid_argument("residual transform requires n_in == n_out");
    LutTransform t;
    t.n_in = n_in;
    t.n_out = n_out;
    t.residual = residual;
    std::mt19937_64 rng(seed);
    t.tables.resize(n_t);
    for (uint32_t i = 0; i < n_t; ++i) {
        t.tables[i].anchors = init_anchor_set(n_in, n_c, mode, rng());
        t.tables[i].n_out = n_out;
        t.tables[i].rows.assign(t.tables[i].row_count() * n_out, 0.0f);
    }
    return t;
}

namespace {

// Temporal bin of v, 0-based: the number of interior edges strictly below v.
// Values at or below an edge fall in the lower bin (strict ">" convention);
// out-of-range values clamp to the first or last bin.
uint32_t bin_digit(const AnchorSet& s, float v) {
    float w = (s.bin_hi - s.bin_lo) / static_cast<float>(s.bins);
    uint32_t d = 0;
    for (uint32_t k = 1; k < s.bins; ++k)
        if (v > s.bin_lo + static_cast<float>(k) * w) ++d;
    return d;
}

// Signed distance from v to the nearest interior bin edge.
float bin_edge_distance(const AnchorSet& s, float v) {
    float w = (s.bin_hi - s.bin_lo) / static_cast<float>(s.bins);
    float best = v - (s.bin_lo + w);
    for (uint32_t k = 2; k < s.bins; ++k) {
        float u = v - (s.bin_lo + static_cast<float>(k) * w);
        if (std::fabs(u) < std::fabs(best)) best = u;
    }
    return best;
}

void check_anchor(uint32_t idx, size_t n) {
    if (idx >= n) throw std::out_of_range("anchor index exceeds input dimension");
}

} // namespace

float comparison_value(const AnchorSet& s, std::span<const float> x, uint32_t r,
                       Counters* counters) {
    switch (s.mode) {
    case HashMode::PairwiseSign: {
        check_anchor(s.a[r], x.size());
        check_anchor(s.b[r], x.size());
        if (counters) {
            counters->comparisons += 1;
            counters->values_loaded += 2;
        }
        return x[s.a[r]] - x[s.b[r]];
    }
    case HashMode::BinQuantized: {
        check_anchor(s.a[r], x.size());
        if (counters) {
            counters->sign_tests += 1;
            counters->values_loaded += 1;
        }
        return bin_edge_distance(s, x[s.a[r]]);
    }
    case HashMode::HyperplaneSign: {
        const auto& plane = s.planes[r];
        if (plane.size() != x.size())
            throw std::out_of_range("plane dimension mismatch");
        float dot = 0.0f;
        for (size_t k = 0; k < plane.size(); ++k) dot += plane[k] * x[k];
        if (counters) {
            counters->comparisons += 1;
            counters->multiplications += plane.size();
            counters->additions += plane.size() - 1;
            counters->values_loaded += 2 * plane.size();
        }
        return dot;
    }
    case HashMode::ComponentSign: {
        check_anchor(s.a[r], x.size());
        if (counters) {
            counters->sign_tests += 1;
            counters->values_loaded += 1;
        }
        return x[s.a[r]];
    }
    }
    return 0.0f;
}

uint64_t compute_index(const LookupTable& table, std::span<const float> x,
                       Counters* counters) {
    const AnchorSet& s = table.anchors;
    uint32_t n_c = s.comparison_count();
    if (s.mode == HashMode::BinQuantized) {
        // Base-m digits, comparison 0 most significant.
        uint64_t j = 0;
        for (uint32_t r = 0; r < n_c; ++r) {
            check_anchor(s.a[r], x.size());
            if (counters) {
                counters->sign_tests += 1;
                counters->values_loaded += 1;
            }
            j = j * s.bins + bin_digit(s, x[s.a[r]]);
        }
        return j;
    }
    uint64_t j = 0;
    for (uint32_t r = 0; r < n_c; ++r) {
        float u = comparison_value(s, x, r, counters);
        j = (j << 1) | (u > 0.0f ? 1u : 0u);
    }
    return j;
}

MinPair compute_index_cached(const LookupTable& table, std::span<const float> x,
                             Counters* counters) {
    const AnchorSet& s = table.anchors;
    uint32_t n_c = s.comparison_count();
    MinPair out;
    if (s.mode == HashMode::BinQuantized) {
        uint64_t j = 0;
        for (uint32_t r = 0; r < n_c; ++r) {
            check_anchor(s.a[r], x.size());
            if (counters) {
                counters->sign_tests += 1;
                counters->values_loaded += 1;
            }
            float v = x[s.a[r]];
            j = j * s.bins + bin_digit(s, v);
            float u = bin_edge_distance(s, v);
            if (r == 0 || std::fabs(u) < std::fabs(out.u_min)) {
                out.r_min = r;
                out.u_min = u;
            }
        }
        out.j = j;
        return out;
    }
    uint64_t j = 0;
    for (uint32_t r = 0; r < n_c; ++r) {
        float u = comparison_value(s, x, r, counters);
        j = (j << 1) | (u > 0.0f ? 1u : 0u);
        if (r == 0 || std::fabs(u) < std::fabs(out.u_min)) {
            out.r_min = r;
            out.u_min = u;
        }
    }
    out.j = j;
    return out;
}

FullIndexCache compute_index_full(const LookupTable& table, std::span<const float> x) {
    const AnchorSet& s = table.anchors;
    uint32_t n_c = s.comparison_count();
    FullIndexCache out;
    out.u.resize(n_c);
    if (s.mode == HashMode::BinQuantized) {
        uint64_t j = 0;
        for (uint32_t r = 0; r < n_c; ++r) {
            float v = x[s.a[r]];
            j = j * s.bins + bin_digit(s, v);
            out.u[r] = bin_edge_distance(s, v);
        }
        out.j = j;
        return out;
    }
    uint64_t j = 0;
    for (uint32_t r = 0; r < n_c; ++r) {
        float u = comparison_value(s, x, r);
        j = (j << 1) | (u > 0.0f ? 1u : 0u);
        out.u[r] = u;
    }
    out.j = j;
    return out;
}

uint64_t flip_bit(uint64_t j, uint32_t r, uint32_t n_bits) {
    if (r >= n_bits) throw std::out_of_range("flip_bit: comparison position out of range");
    return j ^ (uint64_t{1} << (n_bits - 1 - r));
}

uint64_t neighbor_index(const LookupTable& table, const MinPair& cache) {
    const AnchorSet& s = table.anchors;
    uint32_t n_c = s.comparison_count();
    if (s.mode == HashMode::BinQuantized) {
        uint64_t place = 1;
        for (uint32_t k = cache.r_min + 1; k < n_c; ++k) place *= s.bins;
        // u_min > 0: just above the nearest edge, the neighbor bin is below.
        return cache.u_min > 0.0f ? cache.j - place : cache.j + place;
    }
    return flip_bit(cache.j, cache.r_min, n_c);
}

void lut_forward(const LutTransform& t, std::span<const float> x, std::span<float> y,
                 Counters* counters) {
    if (x.size() != t.n_in || y.size() != t.n_out)
        throw std::invalid_argument("lut_forward: dimension mismatch");
    if (t.residual) {
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] = x[k];
    } else {
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] = 0.0f;
    }
    for (const auto& table : t.tables) {
        uint64_t j = compute_index(table, x, counters);
        const float* row = table.row(j);
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] += row[k];
        if (counters) {
            counters->rows_loaded += 1;
            counters->values_loaded += t.n_out;
            counters->additions += t.n_out;
        }
    }
}

void lut_forward_cached(const LutTransform& t, std::span<const float> x,
                        std::span<float> y, std::vector<MinPair>& cache,
                        Counters* counters) {
    if (x.size() != t.n_in || y.size() != t.n_out)
        throw std::invalid_argument("lut_forward_cached: dimension mismatch");
    cache.resize(t.tables.size());
    if (t.residual) {
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] = x[k];
    } else {
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] = 0.0f;
    }
    for (size_t i = 0; i < t.tables.size(); ++i) {
        const auto& table = t.tables[i];
        cache[i] = compute_index_cached(table, x, counters);
        const float* row = table.row(cache[i].j);
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] += row[k];
        if (counters) {
            counters->rows_loaded += 1;
            counters->values_loaded += t.n_out;
            counters->additions += t.n_out;
        }
    }
}

} // namespace polychron
