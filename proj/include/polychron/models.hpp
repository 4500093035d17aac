#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "polychron/autograd.hpp"
#include "polychron/lut.hpp"

namespace polychron {

enum class ForwardMode : uint32_t {
    Discrete = 0,  // inference path, Eq-3 row sums only
    Surrogate = 1, // training-smoothness path, used by gradient checks
};

// ---------------------------------------------------------------------------
// Deep SNN: L+1 residual n -> n transforms.

struct DeepSnn {
    uint32_t n = 0;
    std::vector<LutTransform> layers;
};

DeepSnn make_deep_snn(uint32_t n, uint32_t layer_count, uint32_t n_t, uint32_t n_c,
                      uint64_t seed);

struct DeepSnnCache {
    std::vector<std::vector<MinPair>> layers;
    std::vector<std::vector<FullIndexCache>> full; // filled only for AllPairs
};

void deep_snn_forward(const DeepSnn& model, std::span<const float> x0,
                      std::span<float> x_out, DeepSnnCache* cache = nullptr,
                      ForwardMode mode = ForwardMode::Discrete,
                      bool full_cache = false, Counters* counters = nullptr);

// Backward through all layers. grads must hold one RowGradBuffer per layer.
// Returns nothing; dL/dx0 is written to v0.
void deep_snn_backward(const DeepSnn& model, const DeepSnnCache& cache,
                       std::span<const float> v_top, std::span<float> v0,
                       std::vector<RowGradBuffer>& grads,
                       LearningRule rule = LearningRule::MinPairFlip,
                       Counters* counters = nullptr);

// ---------------------------------------------------------------------------
// Spiking RNN (Elman form): h_t = S(h_{t-1}) + E[token_t], logits = Uh(h_t).

enum class RnnCombine : uint32_t {
    AddAfterLut = 0, // h_t = S(h_{t-1}) + z_t
    ConcatInput = 1, // h_t = S([h_{t-1}, z_t]), S is a 2n -> n transform
};

struct SpikingRnn {
    uint32_t n = 0;
    RnnCombine combine = RnnCombine::AddAfterLut;
    std::vector<float> embedder; // 256 * n
    LutTransform recur;          // n -> n (or 2n -> n for ConcatInput)
    LutTransform unembed;        // n -> 256

    std::span<const float> embed_row(uint8_t token) const {
        return {embedder.data() + size_t{token} * n, n};
    }
};

SpikingRnn make_spiking_rnn(uint32_t n, uint32_t n_t, uint32_t n_c, uint32_t n_t_u,
                            uint32_t n_c_u, uint64_t seed,
                            RnnCombine combine = RnnCombine::AddAfterLut);

struct RnnCache {
    std::vector<std::vector<MinPair>> recur;   // per step
    std::vector<std::vector<MinPair>> unembed; // per step
};

// Runs the window, writing logits (steps * 256, row-major). h_0 = 0.
void rnn_forward(const SpikingRnn& model, std::span<const uint8_t> tokens,
                 std::vector<float>& logits, RnnCache* cache = nullptr,
                 Counters* counters = nullptr);

struct RnnGrads {
    RowGradBuffer recur;
    RowGradBuffer unembed;
    std::vector<float> embedder; // dense 256 * n
};

void init_rnn_grads(const SpikingRnn& model, RnnGrads& g);

// Truncated BPTT over the window, consuming per-step logit gradients.
// Supports MinPairFlip, NoFlip and LayerMinimal (min-pair cache rules).
void rnn_backward(const SpikingRnn& model, std::span<const uint8_t> tokens,
                  const RnnCache& cache, const std::vector<float>& logit_grads,
                  RnnGrads& grads, Counters* counters = nullptr,
                  LearningRule rule = LearningRule::MinPairFlip);

void rnn_apply_update(SpikingRnn& model, const RnnGrads& grads, float lr);

// ---------------------------------------------------------------------------
// SNN transformer attention with V-index caching.

// One attention table over concatenated [z_i, z_j, PE_{i-j}]: n_c pairwise
// comparisons in each z block, p component-sign bits over the PE block.
// Combined index layout is [q bits | k bits | pe bits], MSB -> LSB.
struct AttnTable {
    AnchorSet q;  // PairwiseSign over n
    AnchorSet k;  // PairwiseSign over n
    AnchorSet pe; // ComponentSign over p
    std::vector<float> rows; // 2^{2n_c+p} * n

    uint64_t row_count() const;
    const float* row(uint64_t j) const { return rows.data() + j * n_out; }
    float* row(uint64_t j) { return rows.data() + j * n_out; }
    uint32_t n_out = 0;
};

struct AttentionHead {
    uint32_t n = 0;
    uint32_t n_c = 0;
    uint32_t p = 0;
    uint32_t n_inp = 0;
    std::vector<AttnTable> tables;
    std::vector<float> pe; // (n_inp - 1) * p, offset d at (d-1)*p

    std::span<const float> pe_row(uint32_t offset) const {
        return {pe.data() + size_t{offset - 1} * p, p};
    }
};

AttentionHead make_attention_head(uint32_t n, uint32_t n_t, uint32_t n_c, uint32_t p,
                                  uint32_t n_inp, uint64_t seed);

// Cached index fragment plus the block-wise minimal comparison (for training).
struct IndexFragment {
    uint32_t idx = 0;
    uint32_t r_min = 0;
    float u_min = 0.0f;
};

struct VIndexCache {
    // [table][position] for q/k, [table][offset-1] for pe.
    std::vector<std::vector<IndexFragment>> q, k, pe;
};

void build_v_index_cache(const AttentionHead& head,
                         std::span<const float> z, // n_positions * n
                         uint32_t n_positions, VIndexCache& cache,
                         Counters* counters = nullptr);

// Combined row index for pair (i, j) in table `t`, from cached fragments.
uint64_t attn_pair_index(const AttentionHead& head, const VIndexCache& cache,
                         uint32_t t, uint32_t i, uint32_t j);

// Reference path: index computed directly from the explicit concatenated
// vector [z_i, z_j, PE_{i-j}], bypassing the cache.
uint64_t attn_pair_index_direct(const AttnTable& table,
                                std::span<const float> concat);

// Causal attention: x_i = z_i + sum_{j<i} sum_tables V[pair index]. Writes
// x (n_positions * n).
void attention_forward(const AttentionHead& head, std::span<const float> z,
                       uint32_t n_positions, const VIndexCache& cache,
                       std::span<float> x, ForwardMode mode = ForwardMode::Discrete,
                       Counters* counters = nullptr);

// Pure pair-sum contribution (no z residual); accumulates into acc.
void attention_accumulate(const AttentionHead& head, std::span<const float> z,
                          uint32_t n_positions, const VIndexCache& cache,
                          std::span<float> acc,
                          ForwardMode mode = ForwardMode::Discrete,
                          Counters* counters = nullptr);

struct AttnGrads {
    std::vector<std::map<uint64_t, std::vector<float>>> rows; // per table
    std::vector<float> pe; // (n_inp - 1) * p
};

void init_attn_grads(const AttentionHead& head, AttnGrads& g);

// Backward over all causal pairs. Adds into v_z; when add_residual, also adds
// the pass-through dL/dz_i += dL/dx_i.
void attention_backward(const AttentionHead& head, const VIndexCache& cache,
                        uint32_t n_positions, std::span<const float> v_x,
                        std::span<float> v_z, AttnGrads& grads,
                        bool add_residual = true, Counters* counters = nullptr);

void attention_apply_update(AttentionHead& head, const AttnGrads& grads, float lr);

// ---------------------------------------------------------------------------
// Decoder-only SNN transformer.

struct TransformerBlock {
    std::vector<AttentionHead> heads;
    bool ffn_enabled = false;
    LutTransform ffn; // residual n -> n
};

struct SnnTransformerConfig {
    uint32_t n = 16;
    uint32_t n_inp = 32;
    uint32_t layers = 6;
    uint32_t heads = 1;
    uint32_t n_t = 10;
    uint32_t n_c = 6;
    uint32_t p = 4;
    bool ffn_enabled = false;
    uint32_t ffn_n_t = 16;
    uint32_t ffn_n_c = 6;
    uint32_t unembed_n_t = 16;
    uint32_t unembed_n_c = 6;
};

struct SnnTransformer {
    SnnTransformerConfig cfg;
    std::vector<float> embedder; // 256 * n
    std::vector<TransformerBlock> blocks;
    LutTransform unembed; // n -> 256
};

SnnTransformer make_snn_transformer(const SnnTransformerConfig& cfg, uint64_t seed);

struct TransformerCache {
    struct Block {
        std::vector<VIndexCache> heads;
        std::vector<std::vector<MinPair>> ffn; // per position
    };
    std::vector<Block> blocks;
    std::vector<std::vector<MinPair>> unembed; // per position
};

void transformer_forward(const SnnTransformer& model,
                         std::span<const uint8_t> tokens, std::vector<float>& logits,
                         TransformerCache* cache = nullptr,
                         ForwardMode mode = ForwardMode::Discrete,
                         Counters* counters = nullptr);

struct TransformerGrads {
    struct Block {
        std::vector<AttnGrads> heads;
        RowGradBuffer ffn;
    };
    std::vector<Block> blocks;
    RowGradBuffer unembed;
    std::vector<float> embedder; // 256 * n
};

void init_transformer_grads(const SnnTransformer& model, TransformerGrads& g);

void transformer_backward(const SnnTransformer& model,
                          std::span<const uint8_t> tokens,
                          const TransformerCache& cache,
                          const std::vector<float>& logit_grads,
                          TransformerGrads& grads, Counters* counters = nullptr);

void transformer_apply_update(SnnTransformer& model, const TransformerGrads& grads,
                              float lr);

// ---------------------------------------------------------------------------
// Parameter-efficient fine-tuning.

// Appends one zero-row table with fresh random anchors. Forward output is
// bit-identical before and after. When restrict_gradients, only the new table
// learns.
void fine_tune_add_table(LutTransform& t, uint64_t seed, bool restrict_gradients);

// Adds one comparison (LSB) to table table_idx, doubling its rows; both halves
// copy the old rows so any x still maps to its previous row values.
void fine_tune_split_table(LutTransform& t, size_t table_idx, uint32_t new_a,
                           uint32_t new_b, bool restrict_gradients);

// ---------------------------------------------------------------------------
// Sampling.

// Draws from softmax(logits / temperature) via inverse CDF; deterministic for
// a fixed rng state.
uint8_t sample_softmax(std::span<const float> logits, float temperature,
                       uint64_t& rng_state);

std::vector<uint8_t> rnn_generate(const SpikingRnn& model,
                                  std::span<const uint8_t> prompt, size_t length,
                                  float temperature, uint64_t seed);

std::vector<uint8_t> transformer_generate(const SnnTransformer& model,
                                          std::span<const uint8_t> prompt,
                                          size_t length, float temperature,
                                          uint64_t seed);

} // namespace polychron
