#pragma once

#include <map>
#include <span>
#include <vector>

#include "polychron/lut.hpp"

namespace polychron {

// Uncertainty bump U(u) = 0.5 / (1 + |u|). Used only in training; inference
// never evaluates it.
float uncertainty(float u);
// U'(u) = -0.5 * sign(u) / (1 + |u|)^2, with sign(0) := +1.
float uncertainty_deriv(float u);

enum class LearningRule : uint32_t {
    MinPairFlip = 0, // standard rule: min pair, flipped row
    AllPairs = 1,    // every comparison contributes, scaled by 1/n_c
    NoFlip = 2,      // drops the flipped row, scales S_ix down instead
    LayerMinimal = 3, // only the layer-wide minimal table contributes
    SpikingScalar = 4, // NoFlip + LayerMinimal, scalar backward signal
};

// Accumulated dL/dS rows for one transform, keyed (table, row). std::map keeps
// the application order deterministic.
struct RowGradBuffer {
    std::vector<std::map<uint64_t, std::vector<float>>> tables;
    uint32_t n_out = 0;

    void init(const LutTransform& t);
    void add(uint32_t table, uint64_t row, std::span<const float> g);
    void add_component(uint32_t table, uint64_t row, uint32_t k, float g);
    void clear();
};

// Surrogate forward: per table, S_j + U(u_min) * (S_jbar - S_j). Smooth in x
// wherever no comparison sign and no min-pair identity changes.
void surrogate_forward(const LutTransform& t, std::span<const float> x,
                       std::span<float> y, std::vector<MinPair>* cache_out = nullptr);

// Standard min-pair-flip backward (Fig-8 semantics). Writes v_in (residual
// pass-through or zero), accumulates row gradients (dL/dS_j = v_out).
void backward_lut(const LutTransform& t, const std::vector<MinPair>& cache,
                  std::span<const float> v_out, std::span<float> v_in,
                  RowGradBuffer& grads, Counters* counters = nullptr);

// Rule variants over a single transform. AllPairs requires full_cache; the
// other rules use the min-pair cache. SpikingScalar is handled separately
// (backward_scalar below).
void backward_variant(LearningRule rule, const LutTransform& t,
                      const std::vector<MinPair>& cache,
                      const std::vector<FullIndexCache>* full_cache,
                      std::span<const float> v_out, std::span<float> v_in,
                      RowGradBuffer& grads, Counters* counters = nullptr);

// Scalar backward signal: the upstream gradient is h * (e_a - e_b), or a
// single component when b < 0 (loss seed). No vector dot products occur.
struct ScalarGrad {
    float h = 0.0f;
    int32_t a = -1;
    int32_t b = -1;
};

ScalarGrad backward_scalar(const LutTransform& t, const std::vector<MinPair>& cache,
                           const ScalarGrad& up, RowGradBuffer& grads,
                           Counters* counters = nullptr);

// S_row -= lr * accumulated gradient, for every touched row; untouched rows
// are left bit-identical. Honors transform.trainable_only.
void apply_update(LutTransform& t, const RowGradBuffer& grads, float lr);

// Hybrid hyperplane hashing: dL/dc = U'(c . x) * g * x for the plane with the
// minimal |c . x| in its table.
std::vector<float> hyperplane_anchor_grad(std::span<const float> plane,
                                          std::span<const float> x, float g);

} // namespace polychron
