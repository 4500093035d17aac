#include "polychron/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace polychron {

// ---------------------------------------------------------------------------
// Deep SNN

DeepSnn make_deep_snn(uint32_t n, uint32_t layer_count, uint32_t n_t, uint32_t n_c,
                      uint64_t seed) {
    DeepSnn m;
    m.n = n;
    std::mt19937_64 rng(seed);
    m.layers.reserve(layer_count);
    for (uint32_t l = 0; l < layer_count; ++l)
        m.layers.push_back(make_lut_transform(n, n, n_t, n_c, /*residual=*/true,
                                              HashMode::PairwiseSign, rng()));
    return m;
}

void deep_snn_forward(const DeepSnn& model, std::span<const float> x0,
                      std::span<float> x_out, DeepSnnCache* cache, ForwardMode mode,
                      bool full_cache, Counters* counters) {
    if (x0.size() != model.n || x_out.size() != model.n)
        throw std::invalid_argument("deep_snn_forward: dimension mismatch");
    std::vector<float> cur(x0.begin(), x0.end());
    std::vector<float> next(model.n);
    if (cache) {
        cache->layers.resize(model.layers.size());
        if (full_cache) cache->full.resize(model.layers.size());
    }
    for (size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        if (full_cache && cache) {
            auto& fc = cache->full[l];
            fc.resize(layer.tables.size());
            for (size_t i = 0; i < layer.tables.size(); ++i)
                fc[i] = compute_index_full(layer.tables[i], cur);
        }
        if (mode == ForwardMode::Surrogate) {
            surrogate_forward(layer, cur, next, cache ? &cache->layers[l] : nullptr);
        } else if (cache) {
            lut_forward_cached(layer, cur, next, cache->layers[l], counters);
        } else {
            lut_forward(layer, cur, next, counters);
        }
        std::swap(cur, next);
    }
    std::copy(cur.begin(), cur.end(), x_out.begin());
}

void deep_snn_backward(const DeepSnn& model, const DeepSnnCache& cache,
                       std::span<const float> v_top, std::span<float> v0,
                       std::vector<RowGradBuffer>& grads, LearningRule rule,
                       Counters* counters) {
    if (cache.layers.size() != model.layers.size())
        throw std::invalid_argument("deep_snn_backward: cache mismatch");
    if (grads.size() != model.layers.size())
        throw std::invalid_argument("deep_snn_backward: grads buffer mismatch");

    if (rule == LearningRule::SpikingScalar) {
        // Seed: the dominant component of the top gradient.
        uint32_t m_star = 0;
        for (uint32_t k = 1; k < model.n; ++k)
            if (std::fabs(v_top[k]) > std::fabs(v_top[m_star])) m_star = k;
        ScalarGrad h{v_top[m_star], static_cast<int32_t>(m_star), -1};
        for (size_t l = model.layers.size(); l-- > 0;)
            h = backward_scalar(model.layers[l], cache.layers[l], h, grads[l],
                                counters);
        std::fill(v0.begin(), v0.end(), 0.0f);
        if (h.a >= 0) v0[h.a] += h.h;
        if (h.b >= 0) v0[h.b] -= h.h;
        return;
    }

    std::vector<float> v(v_top.begin(), v_top.end());
    std::vector<float> v_prev(model.n);
    for (size_t l = model.layers.size(); l-- > 0;) {
        const std::vector<FullIndexCache>* fc =
            (rule == LearningRule::AllPairs && l < cache.full.size())
                ? &cache.full[l]
                : nullptr;
        backward_variant(rule, model.layers[l], cache.layers[l], fc, v, v_prev,
                         grads[l], counters);
        std::swap(v, v_prev);
    }
    std::copy(v.begin(), v.end(), v0.begin());
}

// ---------------------------------------------------------------------------
// Spiking RNN

SpikingRnn make_spiking_rnn(uint32_t n, uint32_t n_t, uint32_t n_c, uint32_t n_t_u,
                            uint32_t n_c_u, uint64_t seed, RnnCombine combine) {
    SpikingRnn m;
    m.n = n;
    m.combine = combine;
    m.embedder.assign(size_t{256} * n, 0.0f);
    std::mt19937_64 rng(seed);
    uint32_t recur_in = combine == RnnCombine::ConcatInput ? 2 * n : n;
    m.recur = make_lut_transform(recur_in, n, n_t, n_c, /*residual=*/false,
                                 HashMode::PairwiseSign, rng());
    m.unembed = make_lut_transform(n, 256, n_t_u, n_c_u, /*residual=*/false,
                                   HashMode::PairwiseSign, rng());
    return m;
}

void rnn_forward(const SpikingRnn& model, std::span<const uint8_t> tokens,
                 std::vector<float>& logits, RnnCache* cache, Counters* counters) {
    if (tokens.empty()) throw std::invalid_argument("rnn_forward: empty sequence");
    size_t steps = tokens.size();
    logits.assign(steps * 256, 0.0f);
    if (cache) {
        cache->recur.assign(steps, {});
        cache->unembed.assign(steps, {});
    }
    std::vector<float> h(model.n, 0.0f);
    std::vector<float> h_next(model.n);
    std::vector<float> concat;
    for (size_t t = 0; t < steps; ++t) {
        auto z = model.embed_row(tokens[t]);
        std::span<const float> in;
        if (model.combine == RnnCombine::ConcatInput) {
            concat.assign(h.begin(), h.end());
            concat.insert(concat.end(), z.begin(), z.end());
            in = concat;
        } else {
            in = h;
        }
        if (cache)
            lut_forward_cached(model.recur, in, h_next, cache->recur[t], counters);
        else
            lut_forward(model.recur, in, h_next, counters);
        if (model.combine == RnnCombine::AddAfterLut) {
            for (uint32_t k = 0; k < model.n; ++k) h_next[k] += z[k];
            if (counters) {
                counters->additions += model.n;
                counters->values_loaded += model.n;
            }
        }
        std::swap(h, h_next);
        std::span<float> out(logits.data() + t * 256, 256);
        if (cache)
            lut_forward_cached(model.unembed, h, out, cache->unembed[t], counters);
        else
            lut_forward(model.unembed, h, out, counters);
    }
}

void init_rnn_grads(const SpikingRnn& model, RnnGrads& g) {
    g.recur.init(model.recur);
    g.unembed.init(model.unembed);
    g.embedder.assign(size_t{256} * model.n, 0.0f);
}

void rnn_backward(const SpikingRnn& model, std::span<const uint8_t> tokens,
                  const RnnCache& cache, const std::vector<float>& logit_grads,
                  RnnGrads& grads, Counters* counters, LearningRule rule) {
    size_t steps = tokens.size();
    if (cache.recur.size() != steps || logit_grads.size() != steps * 256)
        throw std::invalid_argument("rnn_backward: cache mismatch");
    std::vector<float> carry(model.n, 0.0f); // dL/dh_t from later steps
    std::vector<float> v_h(model.n);
    std::vector<float> v_in(model.recur.n_in);
    for (size_t t = steps; t-- > 0;) {
        std::span<const float> g_logits(logit_grads.data() + t * 256, 256);
        backward_variant(rule, model.unembed, cache.unembed[t], nullptr, g_logits,
                         v_h, grads.unembed, counters);
        for (uint32_t k = 0; k < model.n; ++k) v_h[k] += carry[k];
        backward_variant(rule, model.recur, cache.recur[t], nullptr, v_h, v_in,
                         grads.recur, counters);
        float* e_row = grads.embedder.data() + size_t{tokens[t]} * model.n;
        if (model.combine == RnnCombine::ConcatInput) {
            for (uint32_t k = 0; k < model.n; ++k) {
                carry[k] = v_in[k];
                e_row[k] += v_in[model.n + k];
            }
        } else {
            // z enters additively: dL/dz_t = dL/dh_t.
            for (uint32_t k = 0; k < model.n; ++k) {
                carry[k] = v_in[k];
                e_row[k] += v_h[k];
            }
        }
    }
}

void rnn_apply_update(SpikingRnn& model, const RnnGrads& grads, float lr) {
    apply_update(model.recur, grads.recur, lr);
    apply_update(model.unembed, grads.unembed, lr);
    for (size_t k = 0; k < model.embedder.size(); ++k)
        model.embedder[k] -= lr * grads.embedder[k];
}

// ---------------------------------------------------------------------------
// Attention

uint64_t AttnTable::row_count() const {
    return uint64_t{1} << (q.comparison_count() + k.comparison_count() +
                           pe.comparison_count());
}

AttentionHead make_attention_head(uint32_t n, uint32_t n_t, uint32_t n_c, uint32_t p,
                                  uint32_t n_inp, uint64_t seed) {
    if (2 * n_c + p > 63)
        throw std::invalid_argument("attention index exceeds 63 bits");
    AttentionHead head;
    head.n = n;
    head.n_c = n_c;
    head.p = p;
    head.n_inp = n_inp;
    head.pe.assign(size_t{n_inp - 1} * p, 0.0f);
    std::mt19937_64 rng(seed);
    // PE vectors start random: zero PE vectors would make all offsets
    // indistinguishable (component-sign hashing of all-zero is constant).
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (auto& v : head.pe) v = dist(rng);
    head.tables.resize(n_t);
    for (auto& table : head.tables) {
        table.q = init_anchor_set(n, n_c, HashMode::PairwiseSign, rng());
        table.k = init_anchor_set(n, n_c, HashMode::PairwiseSign, rng());
        table.pe = init_anchor_set(p, p, HashMode::ComponentSign, rng());
        table.n_out = n;
        table.rows.assign(table.row_count() * n, 0.0f);
    }
    return head;
}

namespace {

IndexFragment hash_fragment(const AnchorSet& s, std::span<const float> x,
                            Counters* counters) {
    IndexFragment f;
    uint32_t n_c = s.comparison_count();
    uint32_t idx = 0;
    for (uint32_t r = 0; r < n_c; ++r) {
        float u = comparison_value(s, x, r, counters);
        idx = (idx << 1) | (u > 0.0f ? 1u : 0u);
        if (r == 0 || std::fabs(u) < std::fabs(f.u_min)) {
            f.r_min = r;
            f.u_min = u;
        }
    }
    f.idx = idx;
    return f;
}

// Minimal comparison across the three blocks of one (i, j, table) pair.
// Blocks tie-break in index order q < k < pe, matching the MSB-first layout.
struct PairMin {
    uint32_t combined_r = 0;
    float u = 0.0f;
    uint32_t block = 0; // 0 = q, 1 = k, 2 = pe
    uint32_t r = 0;     // position within the block
};

PairMin pair_min(const AttentionHead& head, const IndexFragment& q,
                 const IndexFragment& k, const IndexFragment& pe) {
    PairMin m{q.r_min, q.u_min, 0, q.r_min};
    if (std::fabs(k.u_min) < std::fabs(m.u)) {
        m = {head.n_c + k.r_min, k.u_min, 1, k.r_min};
    }
    if (std::fabs(pe.u_min) < std::fabs(m.u)) {
        m = {2 * head.n_c + pe.r_min, pe.u_min, 2, pe.r_min};
    }
    return m;
}

} // namespace

void build_v_index_cache(const AttentionHead& head, std::span<const float> z,
                         uint32_t n_positions, VIndexCache& cache,
                         Counters* counters) {
    if (n_positions > head.n_inp)
        throw std::invalid_argument("build_v_index_cache: too many positions");
    size_t n_t = head.tables.size();
    cache.q.assign(n_t, {});
    cache.k.assign(n_t, {});
    cache.pe.assign(n_t, {});
    for (size_t t = 0; t < n_t; ++t) {
        const auto& table = head.tables[t];
        cache.q[t].resize(n_positions);
        cache.k[t].resize(n_positions);
        for (uint32_t pos = 0; pos < n_positions; ++pos) {
            std::span<const float> zp(z.data() + size_t{pos} * head.n, head.n);
            cache.q[t][pos] = hash_fragment(table.q, zp, counters);
            cache.k[t][pos] = hash_fragment(table.k, zp, counters);
        }
        uint32_t n_off = n_positions >= 2 ? n_positions - 1 : 0;
        cache.pe[t].resize(n_off);
        for (uint32_t d = 1; d <= n_off; ++d)
            cache.pe[t][d - 1] = hash_fragment(table.pe, head.pe_row(d), counters);
    }
}

uint64_t attn_pair_index(const AttentionHead& head, const VIndexCache& cache,
                         uint32_t t, uint32_t i, uint32_t j) {
    uint32_t d = i - j;
    return (uint64_t{cache.q[t][i].idx} << (head.n_c + head.p)) |
           (uint64_t{cache.k[t][j].idx} << head.p) | cache.pe[t][d - 1].idx;
}

uint64_t attn_pair_index_direct(const AttnTable& table,
                                std::span<const float> concat) {
    uint32_t n_c = table.q.comparison_count();
    uint32_t p = table.pe.comparison_count();
    size_t zdim = (concat.size() - p) / 2;
    std::span<const float> zi(concat.data(), zdim);
    std::span<const float> zj(concat.data() + zdim, zdim);
    std::span<const float> pe(concat.data() + 2 * zdim, p);
    uint64_t j = 0;
    for (uint32_t r = 0; r < n_c; ++r)
        j = (j << 1) | (comparison_value(table.q, zi, r) > 0.0f ? 1u : 0u);
    for (uint32_t r = 0; r < n_c; ++r)
        j = (j << 1) | (comparison_value(table.k, zj, r) > 0.0f ? 1u : 0u);
    for (uint32_t r = 0; r < p; ++r)
        j = (j << 1) | (comparison_value(table.pe, pe, r) > 0.0f ? 1u : 0u);
    return j;
}

void attention_accumulate(const AttentionHead& head, std::span<const float> z,
                          uint32_t n_positions, const VIndexCache& cache,
                          std::span<float> acc, ForwardMode mode,
                          Counters* counters) {
    (void)z;
    uint32_t n = head.n;
    uint32_t n_bits = 2 * head.n_c + head.p;
    for (uint32_t i = 1; i < n_positions; ++i) {
        float* out = acc.data() + size_t{i} * n;
        for (uint32_t j = 0; j < i; ++j) {
            for (uint32_t t = 0; t < head.tables.size(); ++t) {
                const auto& table = head.tables[t];
                uint64_t jf = attn_pair_index(head, cache, t, i, j);
                const float* row = table.row(jf);
                if (mode == ForwardMode::Surrogate) {
                    PairMin m = pair_min(head, cache.q[t][i], cache.k[t][j],
                                         cache.pe[t][i - j - 1]);
                    uint64_t jbar = flip_bit(jf, m.combined_r, n_bits);
                    const float* flip = table.row(jbar);
                    float w = uncertainty(m.u);
                    for (uint32_t c = 0; c < n; ++c)
                        out[c] += row[c] + w * (flip[c] - row[c]);
                } else {
                    for (uint32_t c = 0; c < n; ++c) out[c] += row[c];
                }
                if (counters) {
                    counters->rows_loaded += 1;
                    counters->values_loaded += n;
                    counters->additions += n;
                }
            }
        }
    }
}

void attention_forward(const AttentionHead& head, std::span<const float> z,
                       uint32_t n_positions, const VIndexCache& cache,
                       std::span<float> x, ForwardMode mode, Counters* counters) {
    std::copy(z.begin(), z.begin() + size_t{n_positions} * head.n, x.begin());
    attention_accumulate(head, z, n_positions, cache, x, mode, counters);
}

void init_attn_grads(const AttentionHead& head, AttnGrads& g) {
    g.rows.assign(head.tables.size(), {});
    g.pe.assign(head.pe.size(), 0.0f);
}

void attention_backward(const AttentionHead& head, const VIndexCache& cache,
                        uint32_t n_positions, std::span<const float> v_x,
                        std::span<float> v_z, AttnGrads& grads, bool add_residual,
                        Counters* counters) {
    uint32_t n = head.n;
    uint32_t n_bits = 2 * head.n_c + head.p;
    if (add_residual)
        for (size_t k = 0; k < size_t{n_positions} * n; ++k) v_z[k] += v_x[k];
    for (uint32_t i = 1; i < n_positions; ++i) {
        std::span<const float> vi(v_x.data() + size_t{i} * n, n);
        for (uint32_t j = 0; j < i; ++j) {
            uint32_t d = i - j;
            for (uint32_t t = 0; t < head.tables.size(); ++t) {
                const auto& table = head.tables[t];
                uint64_t jf = attn_pair_index(head, cache, t, i, j);
                PairMin m = pair_min(head, cache.q[t][i], cache.k[t][j],
                                     cache.pe[t][d - 1]);
                uint64_t jbar = flip_bit(jf, m.combined_r, n_bits);
                const float* row = table.row(jf);
                const float* flip = table.row(jbar);
                float g = 0.0f;
                for (uint32_t c = 0; c < n; ++c) g += vi[c] * (flip[c] - row[c]);
                if (counters) {
                    counters->dot_products += 1;
                    counters->flipped_rows_loaded += 1;
                }
                float scale = uncertainty_deriv(m.u) * g;
                if (m.block == 0) {
                    float* vzi = v_z.data() + size_t{i} * n;
                    vzi[table.q.a[m.r]] += scale;
                    vzi[table.q.b[m.r]] -= scale;
                } else if (m.block == 1) {
                    float* vzj = v_z.data() + size_t{j} * n;
                    vzj[table.k.a[m.r]] += scale;
                    vzj[table.k.b[m.r]] -= scale;
                } else {
                    grads.pe[size_t{d - 1} * head.p + table.pe.a[m.r]] += scale;
                }
                auto& slot = grads.rows[t][jf];
                if (slot.empty()) slot.assign(n, 0.0f);
                for (uint32_t c = 0; c < n; ++c) slot[c] += vi[c];
            }
        }
    }
}

void attention_apply_update(AttentionHead& head, const AttnGrads& grads, float lr) {
    for (size_t t = 0; t < head.tables.size(); ++t) {
        auto& table = head.tables[t];
        for (const auto& [row_idx, g] : grads.rows[t]) {
            float* row = table.row(row_idx);
            for (uint32_t c = 0; c < head.n; ++c) row[c] -= lr * g[c];
        }
    }
    for (size_t k = 0; k < head.pe.size(); ++k) head.pe[k] -= lr * grads.pe[k];
}

// ---------------------------------------------------------------------------
// Transformer

SnnTransformer make_snn_transformer(const SnnTransformerConfig& cfg, uint64_t seed) {
    SnnTransformer m;
    m.cfg = cfg;
    std::mt19937_64 rng(seed);
    m.embedder.assign(size_t{256} * cfg.n, 0.0f);
    m.blocks.resize(cfg.layers);
    for (auto& block : m.blocks) {
        block.heads.reserve(cfg.heads);
        for (uint32_t h = 0; h < cfg.heads; ++h)
            block.heads.push_back(make_attention_head(cfg.n, cfg.n_t, cfg.n_c,
                                                      cfg.p, cfg.n_inp, rng()));
        block.ffn_enabled = cfg.ffn_enabled;
        if (cfg.ffn_enabled)
            block.ffn = make_lut_transform(cfg.n, cfg.n, cfg.ffn_n_t, cfg.ffn_n_c,
                                           /*residual=*/true,
                                           HashMode::PairwiseSign, rng());
    }
    m.unembed = make_lut_transform(cfg.n, 256, cfg.unembed_n_t, cfg.unembed_n_c,
                                   /*residual=*/false, HashMode::PairwiseSign,
                                   rng());
    return m;
}

void transformer_forward(const SnnTransformer& model,
                         std::span<const uint8_t> tokens, std::vector<float>& logits,
                         TransformerCache* cache, ForwardMode mode,
                         Counters* counters) {
    if (tokens.empty())
        throw std::invalid_argument("transformer_forward: empty sequence");
    if (tokens.size() > model.cfg.n_inp)
        throw std::invalid_argument("transformer_forward: sequence exceeds n_inp");
    uint32_t T = static_cast<uint32_t>(tokens.size());
    uint32_t n = model.cfg.n;
    std::vector<float> z(size_t{T} * n);
    for (uint32_t i = 0; i < T; ++i) {
        const float* e = model.embedder.data() + size_t{tokens[i]} * n;
        std::copy(e, e + n, z.begin() + size_t{i} * n);
    }
    if (cache) cache->blocks.resize(model.blocks.size());
    std::vector<float> x(size_t{T} * n);
    std::vector<float> next(size_t{T} * n);
    VIndexCache local_vcache;
    for (size_t b = 0; b < model.blocks.size(); ++b) {
        const auto& block = model.blocks[b];
        if (cache) cache->blocks[b].heads.resize(block.heads.size());
        std::copy(z.begin(), z.end(), x.begin());
        for (size_t h = 0; h < block.heads.size(); ++h) {
            VIndexCache& vc = cache ? cache->blocks[b].heads[h] : local_vcache;
            build_v_index_cache(block.heads[h], z, T, vc, counters);
            attention_accumulate(block.heads[h], z, T, vc, x, mode, counters);
        }
        if (block.ffn_enabled) {
            if (cache) cache->blocks[b].ffn.resize(T);
            for (uint32_t i = 0; i < T; ++i) {
                std::span<const float> xi(x.data() + size_t{i} * n, n);
                std::span<float> zi(next.data() + size_t{i} * n, n);
                if (mode == ForwardMode::Surrogate)
                    surrogate_forward(block.ffn, xi, zi,
                                      cache ? &cache->blocks[b].ffn[i] : nullptr);
                else if (cache)
                    lut_forward_cached(block.ffn, xi, zi, cache->blocks[b].ffn[i],
                                       counters);
                else
                    lut_forward(block.ffn, xi, zi, counters);
            }
            std::swap(z, next);
        } else {
            std::swap(z, x);
        }
    }
    logits.assign(size_t{T} * 256, 0.0f);
    if (cache) cache->unembed.resize(T);
    for (uint32_t i = 0; i < T; ++i) {
        std::span<const float> zi(z.data() + size_t{i} * n, n);
        std::span<float> li(logits.data() + size_t{i} * 256, 256);
        if (mode == ForwardMode::Surrogate)
            surrogate_forward(model.unembed, zi, li,
                              cache ? &cache->unembed[i] : nullptr);
        else if (cache)
            lut_forward_cached(model.unembed, zi, li, cache->unembed[i], counters);
        else
            lut_forward(model.unembed, zi, li, counters);
    }
}

void init_transformer_grads(const SnnTransformer& model, TransformerGrads& g) {
    g.blocks.resize(model.blocks.size());
    for (size_t b = 0; b < model.blocks.size(); ++b) {
        g.blocks[b].heads.resize(model.blocks[b].heads.size());
        for (size_t h = 0; h < model.blocks[b].heads.size(); ++h)
            init_attn_grads(model.blocks[b].heads[h], g.blocks[b].heads[h]);
        if (model.blocks[b].ffn_enabled) g.blocks[b].ffn.init(model.blocks[b].ffn);
    }
    g.unembed.init(model.unembed);
    g.embedder.assign(size_t{256} * model.cfg.n, 0.0f);
}

void transformer_backward(const SnnTransformer& model,
                          std::span<const uint8_t> tokens,
                          const TransformerCache& cache,
                          const std::vector<float>& logit_grads,
                          TransformerGrads& grads, Counters* counters) {
    uint32_t T = static_cast<uint32_t>(tokens.size());
    uint32_t n = model.cfg.n;
    if (cache.unembed.size() != T || logit_grads.size() != size_t{T} * 256)
        throw std::invalid_argument("transformer_backward: cache mismatch");
    std::vector<float> v_z(size_t{T} * n);
    for (uint32_t i = 0; i < T; ++i) {
        std::span<const float> gi(logit_grads.data() + size_t{i} * 256, 256);
        std::span<float> vi(v_z.data() + size_t{i} * n, n);
        backward_lut(model.unembed, cache.unembed[i], gi, vi, grads.unembed,
                     counters);
    }
    std::vector<float> v_x(size_t{T} * n);
    std::vector<float> v_prev(size_t{T} * n);
    for (size_t b = model.blocks.size(); b-- > 0;) {
        const auto& block = model.blocks[b];
        if (block.ffn_enabled) {
            for (uint32_t i = 0; i < T; ++i) {
                std::span<const float> vzi(v_z.data() + size_t{i} * n, n);
                std::span<float> vxi(v_x.data() + size_t{i} * n, n);
                backward_lut(block.ffn, cache.blocks[b].ffn[i], vzi, vxi,
                             grads.blocks[b].ffn, counters);
            }
        } else {
            std::copy(v_z.begin(), v_z.end(), v_x.begin());
        }
        // Attention: residual pass-through once, then per-head contributions.
        std::copy(v_x.begin(), v_x.end(), v_prev.begin());
        for (size_t h = 0; h < block.heads.size(); ++h)
            attention_backward(block.heads[h], cache.blocks[b].heads[h], T, v_x,
                               v_prev, grads.blocks[b].heads[h],
                               /*add_residual=*/false, counters);
        std::swap(v_z, v_prev);
    }
    for (uint32_t i = 0; i < T; ++i) {
        float* e_row = grads.embedder.data() + size_t{tokens[i]} * n;
        const float* vi = v_z.data() + size_t{i} * n;
        for (uint32_t c = 0; c < n; ++c) e_row[c] += vi[c];
    }
}

void transformer_apply_update(SnnTransformer& model, const TransformerGrads& grads,
                              float lr) {
    for (size_t b = 0; b < model.blocks.size(); ++b) {
        auto& block = model.blocks[b];
        for (size_t h = 0; h < block.heads.size(); ++h)
            attention_apply_update(block.heads[h], grads.blocks[b].heads[h], lr);
        if (block.ffn_enabled) apply_update(block.ffn, grads.blocks[b].ffn, lr);
    }
    apply_update(model.unembed, grads.unembed, lr);
    for (size_t k = 0; k < model.embedder.size(); ++k)
        model.embedder[k] -= lr * grads.embedder[k];
}

// ---------------------------------------------------------------------------
// Fine-tuning

void fine_tune_add_table(LutTransform& t, uint64_t seed, bool restrict_gradients) {
    if (t.tables.empty())
        throw std::invalid_argument("fine_tune_add_table: empty transform");
    const AnchorSet& ref = t.tables.front().anchors;
    LookupTable fresh;
    fresh.anchors =
        init_anchor_set(t.n_in, ref.comparison_count(), ref.mode, seed);
    fresh.anchors.bins = ref.bins;
    fresh.anchors.bin_lo = ref.bin_lo;
    fresh.anchors.bin_hi = ref.bin_hi;
    fresh.n_out = t.n_out;
    fresh.rows.assign(fresh.row_count() * t.n_out, 0.0f);
    t.tables.push_back(std::move(fresh));
    t.trainable_only =
        restrict_gradients ? static_cast<int32_t>(t.tables.size() - 1) : -1;
}

void fine_tune_split_table(LutTransform& t, size_t table_idx, uint32_t new_a,
                           uint32_t new_b, bool restrict_gradients) {
    if (table_idx >= t.tables.size())
        throw std::invalid_argument("fine_tune_split_table: bad table index");
    LookupTable& table = t.tables[table_idx];
    if (table.anchors.mode != HashMode::PairwiseSign)
        throw std::invalid_argument("fine_tune_split_table: PairwiseSign only");
    if (new_a == new_b || new_a >= t.n_in || new_b >= t.n_in)
        throw std::invalid_argument("fine_tune_split_table: bad anchor pair");
    uint64_t old_rows = table.row_count();
    table.anchors.a.push_back(new_a);
    table.anchors.b.push_back(new_b);
    std::vector<float> rows(old_rows * 2 * table.n_out);
    // New comparison is the LSB: index of x post-split is 2*(old index) + bit,
    // and both halves copy the old row.
    for (uint64_t j = 0; j < old_rows; ++j) {
        const float* src = table.rows.data() + j * table.n_out;
        std::copy(src, src + table.n_out,
                  rows.begin() + (2 * j) * table.n_out);
        std::copy(src, src + table.n_out,
                  rows.begin() + (2 * j + 1) * table.n_out);
    }
    table.rows = std::move(rows);
    t.trainable_only = restrict_gradients ? static_cast<int32_t>(table_idx) : -1;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

uint64_t splitmix64(uint64_t& s) {
    uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double uniform01(uint64_t& s) {
    return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

} // namespace

uint8_t sample_softmax(std::span<const float> logits, float temperature,
                       uint64_t& rng_state) {
    if (temperature <= 0.0f)
        throw std::invalid_argument("sample_softmax: temperature must be > 0");
    double mx = logits[0];
    for (float v : logits) mx = std::max(mx, static_cast<double>(v));
    double total = 0.0;
    std::array<double, 256> w{};
    for (size_t k = 0; k < logits.size(); ++k) {
        w[k] = std::exp((static_cast<double>(logits[k]) - mx) / temperature);
        total += w[k];
    }
    double u = uniform01(rng_state) * total;
    double acc = 0.0;
    for (size_t k = 0; k < logits.size(); ++k) {
        acc += w[k];
        if (u < acc) return static_cast<uint8_t>(k);
    }
    return static_cast<uint8_t>(logits.size() - 1);
}

std::vector<uint8_t> rnn_generate(const SpikingRnn& model,
                                  std::span<const uint8_t> prompt, size_t length,
                                  float temperature, uint64_t seed) {
    std::vector<uint8_t> out;
    if (length == 0) return out;
    uint64_t rng = seed;
    std::vector<float> h(model.n, 0.0f);
    std::vector<float> h_next(model.n);
    std::vector<float> logits(256);
    std::vector<float> concat;
    auto step = [&](uint8_t token) {
        auto z = model.embed_row(token);
        std::span<const float> in;
        if (model.combine == RnnCombine::ConcatInput) {
            concat.assign(h.begin(), h.end());
            concat.insert(concat.end(), z.begin(), z.end());
            in = concat;
        } else {
            in = h;
        }
        lut_forward(model.recur, in, h_next);
        if (model.combine == RnnCombine::AddAfterLut)
            for (uint32_t k = 0; k < model.n; ++k) h_next[k] += z[k];
        std::swap(h, h_next);
        lut_forward(model.unembed, h, logits);
    };
    if (prompt.empty()) {
        step(0);
    } else {
        for (uint8_t tok : prompt) step(tok);
    }
    out.reserve(length);
    for (size_t s = 0; s < length; ++s) {
        uint8_t tok = sample_softmax(logits, temperature, rng);
        out.push_back(tok);
        step(tok);
    }
    return out;
}

std::vector<uint8_t> transformer_generate(const SnnTransformer& model,
                                          std::span<const uint8_t> prompt,
                                          size_t length, float temperature,
                                          uint64_t seed) {
    std::vector<uint8_t> out;
    if (length == 0) return out;
    uint64_t rng = seed;
    std::vector<uint8_t> stream(prompt.begin(), prompt.end());
    if (stream.empty()) stream.push_back(0);
    std::vector<float> logits;
    out.reserve(length);
    for (size_t s = 0; s < length; ++s) {
        size_t start = stream.size() > model.cfg.n_inp
                           ? stream.size() - model.cfg.n_inp
                           : 0;
        std::span<const uint8_t> window(stream.data() + start,
                                        stream.size() - start);
        transformer_forward(model, window, logits);
        std::span<const float> last(logits.data() + (window.size() - 1) * 256, 256);
        uint8_t tok = sample_softmax(last, temperature, rng);
        out.push_back(tok);
        stream.push_back(tok);
    }
    return out;
}

} // namespace polychron
