#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diffret/tensor.hpp"

namespace diffret {

enum class Modality { Text, Audio };

const char* modality_name(Modality m);

// Two-layer MLP mapping raw per-modality features into the shared D-dim
// space. The identity variant passes pre-encoded embeddings through untouched.
struct EncoderParams {
    Tensor w1;  // input_dim x D
    Tensor b1;  // D
    Tensor w2;  // D x D
    Tensor b2;  // D
    Modality modality = Modality::Text;
    int64_t input_dim = 0;
    int64_t dim = 0;
    bool identity = false;

    std::vector<Tensor> parameters() const;
};

EncoderParams init_encoder(int64_t input_dim, int64_t dim, Modality modality, uint64_t seed);
EncoderParams identity_encoder(int64_t dim, Modality modality);

// raw is a single feature vector (rank 1) or a batch (rank 2, one row per
// item). No normalization is applied; cosine_similarity normalizes.
Tensor encode(const Tensor& raw, const EncoderParams& params);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Symmetric in-batch contrastive objective at temperature tau: cross-entropy
// of the cosine-similarity matrix against the aligned diagonal, averaged over
// both retrieval directions.
Tensor contrastive_loss(const Tensor& text_batch, const Tensor& audio_batch, double tau);

}  // namespace diffret
