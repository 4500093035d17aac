#include "polychron/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace polychron {

float uncertainty(float u) { return 0.5f / (1.0f + std::fabs(u)); }

float uncertainty_deriv(float u) {
    float d = 1.0f + std::fabs(u);
    float sign = (u < 0.0f) ? -1.0f : 1.0f; // sign(0) := +1
    return -0.5f * sign / (d * d);
}

void RowGradBuffer::init(const LutTransform& t) {
    tables.assign(t.tables.size(), {});
    n_out = t.n_out;
}

void RowGradBuffer::add(uint32_t table, uint64_t row, std::span<const float> g) {
    auto& slot = tables[table][row];
    if (slot.empty()) slot.assign(n_out, 0.0f);
    for (uint32_t k = 0; k < n_out; ++k) slot[k] += g[k];
}

void RowGradBuffer::add_component(uint32_t table, uint64_t row, uint32_t k, float g) {
    auto& slot = tables[table][row];
    if (slot.empty()) slot.assign(n_out, 0.0f);
    slot[k] += g;
}

void RowGradBuffer::clear() {
    for (auto& m : tables) m.clear();
}

void surrogate_forward(const LutTransform& t, std::span<const float> x,
                       std::span<float> y, std::vector<MinPair>* cache_out) {
    if (x.size() != t.n_in || y.size() != t.n_out)
        throw std::invalid_argument("surrogate_forward: dimension mismatch");
    if (t.residual) {
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] = x[k];
    } else {
        for (uint32_t k = 0; k < t.n_out; ++k) y[k] = 0.0f;
    }
    if (cache_out) cache_out->resize(t.tables.size());
    for (size_t i = 0; i < t.tables.size(); ++i) {
        const auto& table = t.tables[i];
        MinPair mp = compute_index_cached(table, x);
        if (cache_out) (*cache_out)[i] = mp;
        uint64_t jbar = neighbor_index(table, mp);
        const float* row = table.row(mp.j);
        const float* flip = table.row(jbar);
        float w = uncertainty(mp.u_min);
        for (uint32_t k = 0; k < t.n_out; ++k)
            y[k] += row[k] + w * (flip[k] - row[k]);
    }
}

namespace {

// Routes the +/- anchor gradient of one comparison into v_in according to the
// hash mode. `scale` is U'(u) * g.
void route_anchor_grad(const AnchorSet& s, uint32_t r, float scale,
                       std::span<float> v_in, Counters* counters) {
    switch (s.mode) {
    case HashMode::PairwiseSign:
        v_in[s.a[r]] += scale;
        v_in[s.b[r]] -= scale;
        if (counters) counters->additions += 2;
        break;
    case HashMode::BinQuantized:
    case HashMode::ComponentSign:
        // u depends on a single component with unit slope.
        v_in[s.a[r]] += scale;
        if (counters) counters->additions += 1;
        break;
    case HashMode::HyperplaneSign: {
        const auto& plane = s.planes[r];
        for (size_t k = 0; k < plane.size(); ++k) v_in[k] += scale * plane[k];
        if (counters) {
            counters->multiplications += plane.size();
            counters->additions += plane.size();
        }
        break;
    }
    }
}

float dot(std::span<const float> v, const float* a, const float* b, uint32_t n,
          Counters* counters) {
    float g = 0.0f;
    for (uint32_t k = 0; k < n; ++k) g += v[k] * (a[k] - b[k]);
    if (counters) {
        counters->dot_products += 1;
        counters->multiplications += n;
        counters->additions += 2 * n;
    }
    return g;
}

void check_shapes(const LutTransform& t, size_t cache_size,
                  std::span<const float> v_out, std::span<float> v_in) {
    if (cache_size != t.tables.size())
        throw std::invalid_argument("backward: cache/transform mismatch");
    if (v_out.size() != t.n_out || v_in.size() != t.n_in)
        throw std::invalid_argument("backward: gradient dimension mismatch");
}

void start_v_in(const LutTransform& t, std::span<const float> v_out,
                std::span<float> v_in) {
    if (t.residual) {
        for (uint32_t k = 0; k < t.n_in; ++k) v_in[k] = v_out[k];
    } else {
        for (uint32_t k = 0; k < t.n_in; ++k) v_in[k] = 0.0f;
    }
}

bool table_trainable(const LutTransform& t, size_t i) {
    return t.trainable_only < 0 || static_cast<size_t>(t.trainable_only) == i;
}

} // namespace

void backward_lut(const LutTransform& t, const std::vector<MinPair>& cache,
                  std::span<const float> v_out, std::span<float> v_in,
                  RowGradBuffer& grads, Counters* counters) {
    check_shapes(t, cache.size(), v_out, v_in);
    start_v_in(t, v_out, v_in);
    for (size_t i = 0; i < t.tables.size(); ++i) {
        if (!table_trainable(t, i)) continue;
        const auto& table = t.tables[i];
        const MinPair& mp = cache[i];
        uint64_t jbar = neighbor_index(table, mp);
        float g = dot(v_out, table.row(jbar), table.row(mp.j), t.n_out, counters);
        if (counters) {
            counters->flipped_rows_loaded += 1;
            counters->rows_loaded += 2;
            counters->values_loaded += 2 * t.n_out;
        }
        route_anchor_grad(table.anchors, mp.r_min,
                          uncertainty_deriv(mp.u_min) * g, v_in, counters);
        grads.add(static_cast<uint32_t>(i), mp.j, v_out);
    }
}

void backward_variant(LearningRule rule, const LutTransform& t,
                      const std::vector<MinPair>& cache,
                      const std::vector<FullIndexCache>* full_cache,
                      std::span<const float> v_out, std::span<float> v_in,
                      RowGradBuffer& grads, Counters* counters) {
    switch (rule) {
    case LearningRule::MinPairFlip:
        backward_lut(t, cache, v_out, v_in, grads, counters);
        return;
    case LearningRule::AllPairs: {
        if (!full_cache)
            throw std::invalid_argument("AllPairs requires the full index cache");
        check_shapes(t, full_cache->size(), v_out, v_in);
        start_v_in(t, v_out, v_in);
        for (size_t i = 0; i < t.tables.size(); ++i) {
            if (!table_trainable(t, i)) continue;
            const auto& table = t.tables[i];
            const auto& fc = (*full_cache)[i];
            uint32_t n_c = table.anchors.comparison_count();
            float inv = 1.0f / static_cast<float>(n_c);
            for (uint32_t r = 0; r < n_c; ++r) {
                MinPair mp{fc.j, r, fc.u[r]};
                uint64_t jbar = neighbor_index(table, mp);
                float g = dot(v_out, table.row(jbar), table.row(fc.j), t.n_out,
                              counters);
                if (counters) counters->flipped_rows_loaded += 1;
                route_anchor_grad(table.anchors, r,
                                  uncertainty_deriv(fc.u[r]) * g * inv, v_in,
                                  counters);
            }
            grads.add(static_cast<uint32_t>(i), fc.j, v_out);
        }
        return;
    }
    case LearningRule::NoFlip: {
        check_shapes(t, cache.size(), v_out, v_in);
        start_v_in(t, v_out, v_in);
        for (size_t i = 0; i < t.tables.size(); ++i) {
            if (!table_trainable(t, i)) continue;
            const auto& table = t.tables[i];
            const MinPair& mp = cache[i];
            const float* row = table.row(mp.j);
            float g = 0.0f;
            for (uint32_t k = 0; k < t.n_out; ++k) g += v_out[k] * row[k];
            if (counters) {
                counters->dot_products += 1;
                counters->multiplications += t.n_out;
                counters->additions += t.n_out;
            }
            route_anchor_grad(table.anchors, mp.r_min,
                              -uncertainty_deriv(mp.u_min) * g, v_in, counters);
            grads.add(static_cast<uint32_t>(i), mp.j, v_out);
        }
        return;
    }
    case LearningRule::LayerMinimal: {
        check_shapes(t, cache.size(), v_out, v_in);
        start_v_in(t, v_out, v_in);
        size_t i_min = 0;
        for (size_t i = 1; i < t.tables.size(); ++i)
            if (std::fabs(cache[i].u_min) < std::fabs(cache[i_min].u_min)) i_min = i;
        for (size_t i = 0; i < t.tables.size(); ++i) {
            if (!table_trainable(t, i)) continue;
            if (i == i_min) {
                const auto& table = t.tables[i];
                const MinPair& mp = cache[i];
                uint64_t jbar = neighbor_index(table, mp);
                float g = dot(v_out, table.row(jbar), table.row(mp.j), t.n_out,
                              counters);
                if (counters) counters->flipped_rows_loaded += 1;
                route_anchor_grad(table.anchors, mp.r_min,
                                  uncertainty_deriv(mp.u_min) * g, v_in, counters);
            }
            grads.add(static_cast<uint32_t>(i), cache[i].j, v_out);
        }
        return;
    }
    case LearningRule::SpikingScalar:
        throw std::invalid_argument("SpikingScalar uses backward_scalar");
    }
}

ScalarGrad backward_scalar(const LutTransform& t, const std::vector<MinPair>& cache,
                           const ScalarGrad& up, RowGradBuffer& grads,
                           Counters* counters) {
    if (cache.size() != t.tables.size())
        throw std::invalid_argument("backward_scalar: cache/transform mismatch");
    if (up.a < 0 || static_cast<uint32_t>(up.a) >= t.n_out ||
        (up.b >= 0 && static_cast<uint32_t>(up.b) >= t.n_out))
        throw std::invalid_argument("backward_scalar: bad upstream components");
    // Layer-minimal table.
    size_t i_min = 0;
    for (size_t i = 1; i < t.tables.size(); ++i)
        if (std::fabs(cache[i].u_min) < std::fabs(cache[i_min].u_min)) i_min = i;

    // Row updates: v^{l+1} is sparse, so each row gradient touches 1-2 values.
    for (size_t i = 0; i < t.tables.size(); ++i) {
        if (!table_trainable(t, i)) continue;
        grads.add_component(static_cast<uint32_t>(i), cache[i].j,
                            static_cast<uint32_t>(up.a), up.h);
        if (up.b >= 0)
            grads.add_component(static_cast<uint32_t>(i), cache[i].j,
                                static_cast<uint32_t>(up.b), -up.h);
        if (counters) counters->additions += up.b >= 0 ? 2 : 1;
    }

    const auto& table = t.tables[i_min];
    const MinPair& mp = cache[i_min];
    const float* row = table.row(mp.j);
    // NoFlip g with sparse v: g = h * (s_a - s_b); then h_l = -U'(u) * g.
    float g = row[up.a] * up.h;
    if (up.b >= 0) g -= row[up.b] * up.h;
    if (counters) {
        counters->multiplications += up.b >= 0 ? 2 : 1;
        counters->additions += up.b >= 0 ? 1 : 0;
    }
    ScalarGrad out;
    out.h = -uncertainty_deriv(mp.u_min) * g;
    if (table.anchors.mode == HashMode::PairwiseSign) {
        out.a = static_cast<int32_t>(table.anchors.a[mp.r_min]);
        out.b = static_cast<int32_t>(table.anchors.b[mp.r_min]);
    } else {
        out.a = static_cast<int32_t>(table.anchors.a[mp.r_min]);
        out.b = -1;
    }
    return out;
}

void apply_update(LutTransform& t, const RowGradBuffer& grads, float lr) {
    if (grads.tables.size() != t.tables.size())
        throw std::invalid_argument("apply_update: buffer/transform mismatch");
    for (size_t i = 0; i < t.tables.size(); ++i) {
        if (!table_trainable(t, i)) continue;
        auto& table = t.tables[i];
        for (const auto& [row_idx, g] : grads.tables[i]) {
            float* row = table.row(row_idx);
            for (uint32_t k = 0; k < t.n_out; ++k) row[k] -= lr * g[k];
        }
    }
}

std::vector<float> hyperplane_anchor_grad(std::span<const float> plane,
                                          std::span<const float> x, float g) {
    if (plane.size() != x.size())
        throw std::invalid_argument("hyperplane_anchor_grad: dimension mismatch");
    float u = 0.0f;
    for (size_t k = 0; k < x.size(); ++k) u += plane[k] * x[k];
    float scale = uncertainty_deriv(u) * g;
    std::vector<float> out(x.size());
    for (size_t k = 0; k < x.size(); ++k) out[k] = scale * x[k];
    return out;
}

} // namespace polychron
