#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "polychron/models.hpp"

namespace polychron {

struct Corpus {
    std::vector<uint8_t> train_bytes;
    std::vector<uint8_t> val_bytes;
    uint32_t n_inp = 32;
};

// Reads the file raw (no decoding) and splits a contiguous tail off as the
// validation set.
Corpus load_corpus(const std::string& path, double val_fraction);
Corpus split_corpus(std::vector<uint8_t> bytes, double val_fraction);

// Numerically stable; returns loss in nats and writes softmax - onehot(target)
// into grad (256 entries).
float softmax_cross_entropy(std::span<const float> logits, uint8_t target,
                            std::span<float> grad);

// scale * min(step^{-1/2}, step * warmup^{-3/2}); constant mode returns scale.
float lr_schedule(uint64_t step, uint64_t warmup, float scale,
                  bool constant = false);

enum class ModelKind : uint32_t { Rnn = 0, Transformer = 1 };

struct TrainConfig {
    ModelKind kind = ModelKind::Rnn;
    // Shared dims
    uint32_t n = 64;
    uint32_t n_inp = 32;
    // RNN
    uint32_t n_t = 64;
    uint32_t n_c = 10;
    uint32_t unembed_n_t = 64;
    uint32_t unembed_n_c = 6;
    RnnCombine combine = RnnCombine::AddAfterLut;
    // Transformer
    SnnTransformerConfig transformer;

    LearningRule rule = LearningRule::MinPairFlip;
    float lr_scale = -1.0f; // < 0: default n^{-1/2}
    uint64_t warmup_steps = 4000;
    bool lr_constant = false;
    uint32_t batch_size = 16;
    uint64_t max_steps = 1000;
    uint64_t eval_interval = 100;
    uint32_t max_eval_windows = 2000; // evenly spaced subsample; 0 = all
    uint64_t seed = 1;
    std::optional<double> stop_bpc;
    uint32_t threads = 1;
    uint64_t checkpoint_interval = 0; // 0 = only final
};

using LanguageModel = std::variant<SpikingRnn, SnnTransformer>;

LanguageModel make_model(const TrainConfig& cfg);

struct CurvePoint {
    uint64_t step = 0;
    double train_loss_nats = 0.0;
    double val_bpc = 0.0;
};

// Mean next-byte cross-entropy (base 2) over validation windows, inference
// mode. Windows are evenly spaced when max_windows caps the count.
double evaluate(const LanguageModel& model, const Corpus& corpus,
                uint32_t max_windows = 0);

// Per-eval callback, e.g. for progress printing or periodic checkpoints.
using EvalHook = std::function<void(const CurvePoint&)>;

std::vector<CurvePoint> train_loop(LanguageModel& model, const Corpus& corpus,
                                   const TrainConfig& cfg,
                                   uint64_t start_step = 0,
                                   const EvalHook& hook = {});

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& curve);

// Checkpoint I/O. Little-endian; magic "PLYC", u32 version, u32 config length,
// UTF-8 key=value config lines, then anchor and row payloads.
struct Checkpoint {
    TrainConfig config;
    uint64_t step = 0;
    LanguageModel model;
};

void save_checkpoint(const std::string& path, const LanguageModel& model,
                     const TrainConfig& cfg, uint64_t step);
Checkpoint load_checkpoint(const std::string& path);

} // namespace polychron
