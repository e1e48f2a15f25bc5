#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffret/datagen.hpp"
#include "diffret/denoiser.hpp"
#include "diffret/diffusion.hpp"
#include "diffret/encoders.hpp"
#include "diffret/tensor.hpp"

namespace diffret {

struct TrainConfig {
    int64_t dim = 32;          // shared embedding width
    int64_t steps = 50;        // diffusion steps K
    int64_t batch_size = 32;
    int64_t epochs_phase1 = 30;
    int64_t epochs_phase2 = 40;
    double lr_phase1 = 1e-3;
    double lr_phase2 = 1e-3;
    double tau = 0.07;
    uint64_t seed = 1;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double label_smoothing = 0.0;
    int64_t denoiser_hidden = 0;  // 0 means same as dim
    bool scaled_attention = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct LossRecord {
    int64_t epoch = 0;
    int phase = 0;
    double loss = 0.0;
};

struct EncoderPair {
    EncoderParams text;
    EncoderParams audio;
};

struct DenoiserPair {
    DenoiserParams t2a;
    DenoiserParams a2t;
};

// KL(smoothed target || prediction). With label smoothing 0 this is exactly
// the cross-entropy at the target index. Prediction entries below 1e-12 that
// carry target mass are clamped; each clamp bumps a process-wide warning
// counter.
Tensor kl_loss(const Tensor& x0_hat, const Tensor& x0, double eps_ls = 0.0);
int64_t kl_clamp_warnings();
void reset_kl_clamp_warnings();

// Phase 1: contrastive training of both encoders on raw feature pairs.
EncoderPair train_phase1(const DatasetSplit& data, const TrainConfig& cfg,
                         std::vector<LossRecord>* curve = nullptr);

// Phase 2: encoders frozen (enforced by checksum), both denoiser directions
// trained jointly on in-batch candidate sets with uniformly sampled noise
// levels.
DenoiserPair train_phase2(const DatasetSplit& data, const EncoderPair& encoders,
                          const TrainConfig& cfg, std::vector<LossRecord>* curve = nullptr);

uint64_t params_checksum(const std::vector<Tensor>& params);
uint64_t encoder_checksum(const EncoderPair& encoders);

// Encode every pair with frozen encoders (no gradients recorded).
std::vector<std::vector<double>> embed_all(const DatasetSplit& data, const EncoderParams& params,
                                           Modality which);

void append_loss_csv(const std::string& path, const std::vector<LossRecord>& records);

}  // namespace diffret
