#include "diffret/denoiser.hpp"

#include <cmath>

#include "diffret/errors.hpp"
#include "diffret/rng.hpp"

namespace diffret {

const char* direction_name(Direction d) {
    return d == Direction::TextToAudio ? "t2a" : "a2t";
}

std::vector<Tensor> DenoiserParams::parameters() const {
    return {w_query, w_key, w_value, dec_w1, dec_b1, dec_w2, dec_b2};
}

namespace {

Tensor uniform_param(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = rng.uniform(-bound, bound);
    return Tensor::param(std::move(shape), std::move(data));
}

}  // namespace

DenoiserParams init_denoiser(int64_t dim, Direction direction, uint64_t seed, int64_t hidden,
                             bool scaled_attention) {
    if (dim < 2 || dim % 2 != 0) throw ContractError("denoiser: dim must be even and >= 2");
    if (hidden <= 0) hidden = dim;
    Rng rng(seed);
    DenoiserParams p;
    p.w_query = uniform_param(rng, {dim, dim}, dim);
    p.w_key = uniform_param(rng, {dim, dim}, dim);
    p.w_value = uniform_param(rng, {dim, dim}, dim);
    p.dec_w1 = uniform_param(rng, {2 * dim, hidden}, 2 * dim);
    p.dec_b1 = uniform_param(rng, {hidden}, 2 * dim);
    p.dec_w2 = uniform_param(rng, {hidden}, hidden);
    p.dec_b2 = uniform_param(rng, {}, hidden);
    p.direction = direction;
    p.dim = dim;
    p.hidden = hidden;
    p.scaled_attention = scaled_attention;
    return p;
}

Tensor noise_embedding(int64_t k, int64_t dim) {
    if (k < 0) throw ContractError("noise_embedding: k must be >= 0");
    if (dim < 2 || dim % 2 != 0) throw ContractError("noise_embedding: dim must be even");
    std::vector<double> out(static_cast<size_t>(dim));
    const auto half = static_cast<double>(dim) / 2.0;
    for (int64_t i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        const double phase = static_cast<double>(k) * freq;
        out[static_cast<size_t>(2 * i)] = std::sin(phase);
        out[static_cast<size_t>(2 * i + 1)] = std::cos(phase);
    }
    return Tensor::from({dim}, std::move(out));
}

namespace {

void check_denoise_inputs(const Tensor& query_rep, const Tensor& cand_reps, const Tensor& x_k,
                          const DenoiserParams& params) {
    if (cand_reps.rank() != 2 || cand_reps.dim(0) < 1) {
        throw ContractError("denoiser: candidate set must be a non-empty matrix");
    }
    if (query_rep.rank() != 1 || query_rep.dim(0) != params.dim ||
        cand_reps.dim(1) != params.dim) {
        throw ContractError("denoiser: representation width does not match parameter dim");
    }
    if (x_k.rank() != 1 || x_k.dim(0) != cand_reps.dim(0)) {
        throw ContractError("denoiser: x_k length does not match candidate count");
    }
}

}  // namespace

Tensor attention_weights(const Tensor& query_rep, const Tensor& cand_reps, const Tensor& x_k,
                         int64_t k, const DenoiserParams& params) {
    check_denoise_inputs(query_rep, cand_reps, x_k, params);
    const Tensor pjk = noise_embedding(k, params.dim);
    const Tensor q_shift = add(query_rep, pjk);
    const Tensor c_shift = add(cand_reps, pjk);

    const Tensor q_proj = matmul(params.w_query, q_shift);               // D
    const Tensor k_proj = matmul(c_shift, transpose(params.w_key));     // N x D
    Tensor scores = matmul(k_proj, q_proj);                              // N
    if (params.scaled_attention) {
        scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(params.dim)));
    }
    return softmax(add(scores, x_k));
}

Tensor denoise_forward(const Tensor& query_rep, const Tensor& cand_reps, const Tensor& x_k,
                       int64_t k, const DenoiserParams& params) {
    check_denoise_inputs(query_rep, cand_reps, x_k, params);
    const int64_t n = cand_reps.dim(0);
    const Tensor pjk = noise_embedding(k, params.dim);
    const Tensor c_shift = add(cand_reps, pjk);

    const Tensor weights = attention_weights(query_rep, cand_reps, x_k, k, params);
    const Tensor v_proj = matmul(c_shift, transpose(params.w_value));  // N x D
    const Tensor pooled = attn_pool(weights, v_proj);                  // D

    // Decoder input is the raw candidate paired with the pooled query-aware
    // embedding, one row per candidate.
    const Tensor dec_in = concat(cand_reps, tile_rows(pooled, n));  // N x 2D
    const Tensor h = relu(add(matmul(dec_in, params.dec_w1), params.dec_b1));
    const Tensor logits = add(matmul(h, params.dec_w2), params.dec_b2);  // N
    return softmax(logits);
}

}  // namespace diffret
