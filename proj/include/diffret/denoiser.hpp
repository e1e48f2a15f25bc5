#pragma once

#include <cstdint>
#include <vector>

#include "diffret/tensor.hpp"

namespace diffret {

enum class Direction { TextToAudio, AudioToText };

const char* direction_name(Direction d);

// One parameter set per retrieval direction. The query projection is applied
// to the query-side modality, key/value to the candidate side; the decoder is
// a two-layer MLP over [candidate, pooled attention output].
struct DenoiserParams {
    Tensor w_query;  // D x D
    Tensor w_key;    // D x D
    Tensor w_value;  // D x D
    Tensor dec_w1;   // 2D x H
    Tensor dec_b1;   // H
    Tensor dec_w2;   // H
    Tensor dec_b2;   // scalar
    Direction direction = Direction::TextToAudio;
    int64_t dim = 0;
    int64_t hidden = 0;
    bool scaled_attention = false;  // divide attention scores by sqrt(D)

    std::vector<Tensor> parameters() const;
};

DenoiserParams init_denoiser(int64_t dim, Direction direction, uint64_t seed, int64_t hidden = 0,
                             bool scaled_attention = false);

// Sinusoidal embedding of the noise level; dim must be even.
Tensor noise_embedding(int64_t k, int64_t dim);

// Softmax(Q K^T + x_k) over the candidates. The current noisy distribution
// x_k biases the attention toward candidates that carried probability mass at
// the previous level.
Tensor attention_weights(const Tensor& query_rep, const Tensor& cand_reps, const Tensor& x_k,
                         int64_t k, const DenoiserParams& params);

// Predicts the clean distribution over the N candidates. Output is on the
// simplex by construction, and bit-identical under any candidate permutation.
Tensor denoise_forward(const Tensor& query_rep, const Tensor& cand_reps, const Tensor& x_k,
                       int64_t k, const DenoiserParams& params);

}  // namespace diffret
