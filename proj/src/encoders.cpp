#include "diffret/encoders.hpp"

#include <cmath>

#include "diffret/errors.hpp"
#include "diffret/rng.hpp"

namespace diffret {

const char* modality_name(Modality m) { return m == Modality::Text ? "text" : "audio"; }

std::vector<Tensor> EncoderParams::parameters() const {
    if (identity) return {};
    return {w1, b1, w2, b2};
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

EncoderParams init_encoder(int64_t input_dim, int64_t dim, Modality modality, uint64_t seed) {
    if (input_dim < 1 || dim < 1) throw ContractError("encoder: dims must be >= 1");
    Rng rng(seed);
    EncoderParams p;
    p.w1 = uniform_param(rng, {input_dim, dim}, input_dim);
    p.b1 = uniform_param(rng, {dim}, input_dim);
    p.w2 = uniform_param(rng, {dim, dim}, dim);
    p.b2 = uniform_param(rng, {dim}, dim);
    p.modality = modality;
    p.input_dim = input_dim;
    p.dim = dim;
    return p;
}

EncoderParams identity_encoder(int64_t dim, Modality modality) {
    EncoderParams p;
    p.modality = modality;
    p.input_dim = dim;
    p.dim = dim;
    p.identity = true;
    return p;
}

Tensor encode(const Tensor& raw, const EncoderParams& params) {
    const int64_t in_dim = raw.rank() == 2 ? raw.dim(1) : raw.dim(0);
    if (in_dim != params.input_dim) {
        throw ContractError("encode: input width " + std::to_string(in_dim) +
                            " does not match encoder input_dim " +
                            std::to_string(params.input_dim));
    }
    if (params.identity) return raw;
    const Tensor h = relu(add(matmul(raw, params.w1), params.b1));
    return add(matmul(h, params.w2), params.b2);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ContractError("cosine: vector lengths differ");
    if (a.empty()) throw ContractError("cosine: empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw NumericError("cosine similarity of a zero-norm vector is undefined");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor contrastive_loss(const Tensor& text_batch, const Tensor& audio_batch, double tau) {
    if (text_batch.rank() != 2 || audio_batch.rank() != 2 ||
        text_batch.dim(0) != audio_batch.dim(0) || text_batch.dim(1) != audio_batch.dim(1)) {
        throw ContractError("contrastive_loss: batches must share shape [B, D]");
    }
    const int64_t b = text_batch.dim(0);
    if (b < 2) throw ContractError("contrastive_loss: need at least 2 pairs for negatives");
    if (!(tau > 0.0)) throw ContractError("contrastive_loss: tau must be positive");

    const Tensor text_norm = sqrt(sum_rows(mul(text_batch, text_batch)));    // B
    const Tensor audio_norm = sqrt(sum_rows(mul(audio_batch, audio_batch))); // B
    const Tensor dots = matmul(text_batch, transpose(audio_batch));          // B x B
    const Tensor norms = matmul(reshape(text_norm, {b, 1}), reshape(audio_norm, {1, b}));
    const Tensor logits = scale(div(dots, norms), 1.0 / tau);

    const Tensor over_audio = log_softmax(logits, 1);  // text query, audio candidates
    const Tensor over_text = log_softmax(logits, 0);   // audio query, text candidates
    const Tensor diag = Tensor::identity(b);
    const Tensor matched = sum(mul(add(over_audio, over_text), diag));
    return scale(matched, -0.5 / static_cast<double>(b));
}

}  // namespace diffret
