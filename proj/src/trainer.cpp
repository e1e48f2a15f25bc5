#include "diffret/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "diffret/adam.hpp"
#include "diffret/errors.hpp"
#include "diffret/rng.hpp"

namespace diffret {

void TrainConfig::validate() const {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("dim must be even and >= 2");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (epochs_phase1 < 0 || epochs_phase2 < 0) throw ConfigError("epoch counts must be >= 0");
    if (!(lr_phase1 >= 0.0) || !(lr_phase2 >= 0.0)) throw ConfigError("learning rates must be >= 0");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ConfigError("beta range must satisfy 0 < beta_start <= beta_end < 1");
    }
    if (!(label_smoothing >= 0.0) || !(label_smoothing < 1.0)) {
        throw ConfigError("label_smoothing must be in [0, 1)");
    }
    if (denoiser_hidden < 0) throw ConfigError("denoiser_hidden must be >= 0");
}

namespace {

std::atomic<int64_t> g_kl_clamp_warnings{0};
constexpr double kProbFloor = 1e-12;

}  // namespace

int64_t kl_clamp_warnings() { return g_kl_clamp_warnings.load(); }
void reset_kl_clamp_warnings() { g_kl_clamp_warnings.store(0); }

Tensor kl_loss(const Tensor& x0_hat, const Tensor& x0, double eps_ls) {
    if (x0_hat.rank() != 1 || x0.rank() != 1 || x0_hat.dim(0) != x0.dim(0)) {
        throw ContractError("kl_loss: prediction and target must be rank-1 of equal length");
    }
    if (!(eps_ls >= 0.0) || !(eps_ls < 1.0)) throw ContractError("kl_loss: eps_ls must be in [0,1)");
    const int64_t n = x0.dim(0);

    std::vector<double> target(static_cast<size_t>(n));
    double target_entropy_term = 0.0;  // sum t_i log t_i, with 0 log 0 = 0
    for (int64_t i = 0; i < n; ++i) {
        const double t = (1.0 - eps_ls) * x0.at(i) + eps_ls / static_cast<double>(n);
        target[static_cast<size_t>(i)] = t;
        if (t > 0.0) {
            target_entropy_term += t * std::log(t);
            if (x0_hat.at(i) < kProbFloor) g_kl_clamp_warnings.fetch_add(1);
        }
    }

    const Tensor t_const = Tensor::from({n}, std::move(target));
    const Tensor cross = scale(sum(mul(t_const, log(clamp_min(x0_hat, kProbFloor)))), -1.0);
    return add(cross, Tensor::scalar(target_entropy_term));
}

uint64_t params_checksum(const std::vector<Tensor>& params) {
    // FNV-1a over the raw little-endian bytes of every value.
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](uint64_t bits) {
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffULL;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : params) {
        for (double v : p.data()) {
            uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            mix(bits);
        }
    }
    return h;
}

uint64_t encoder_checksum(const EncoderPair& encoders) {
    auto params = encoders.text.parameters();
    const auto audio = encoders.audio.parameters();
    params.insert(params.end(), audio.begin(), audio.end());
    return params_checksum(params);
}

namespace {

Tensor batch_matrix(const DatasetSplit& data, const std::vector<size_t>& order, size_t begin,
                    size_t count, Modality which) {
    const int64_t width = which == Modality::Text ? data.text_dim : data.audio_dim;
    std::vector<double> buf;
    buf.reserve(count * static_cast<size_t>(width));
    for (size_t i = 0; i < count; ++i) {
        const auto& pair = data.pairs[order[begin + i]];
        const auto& src = which == Modality::Text ? pair.text : pair.audio;
        buf.insert(buf.end(), src.begin(), src.end());
    }
    return Tensor::from({static_cast<int64_t>(count), width}, std::move(buf));
}

}  // namespace

EncoderPair train_phase1(const DatasetSplit& data, const TrainConfig& cfg,
                         std::vector<LossRecord>* curve) {
    cfg.validate();
    if (data.pre_encoded) {
        throw ContractError("phase 1 needs raw features; dataset is pre-encoded");
    }
    if (static_cast<int64_t>(data.pairs.size()) < cfg.batch_size) {
        throw ContractError("phase 1 needs at least batch_size pairs");
    }

    EncoderPair enc{
        init_encoder(data.text_dim, cfg.dim, Modality::Text, Rng::derive(cfg.seed, 1)),
        init_encoder(data.audio_dim, cfg.dim, Modality::Audio, Rng::derive(cfg.seed, 2)),
    };
    auto params = enc.text.parameters();
    {
        const auto audio = enc.audio.parameters();
        params.insert(params.end(), audio.begin(), audio.end());
    }
    Adam opt(params, {cfg.lr_phase1, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    Rng shuffle_rng(Rng::derive(cfg.seed, 3));

    std::vector<size_t> order(data.pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    const auto bsz = static_cast<size_t>(cfg.batch_size);

    for (int64_t epoch = 1; epoch <= cfg.epochs_phase1; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int64_t batches = 0;
        for (size_t begin = 0; begin + bsz <= order.size(); begin += bsz) {
            const Tensor text_raw = batch_matrix(data, order, begin, bsz, Modality::Text);
            const Tensor audio_raw = batch_matrix(data, order, begin, bsz, Modality::Audio);
            double batch_loss;
            try {
                GradTape tape;
                const Tensor loss = contrastive_loss(encode(text_raw, enc.text),
                                                     encode(audio_raw, enc.audio), cfg.tau);
                batch_loss = loss.item();
                tape.backward(loss);
            } catch (const NumericError& e) {
                throw NumericError("phase 1 diverged at epoch " + std::to_string(epoch) + ": " +
                                   e.what());
            }
            opt.step();
            epoch_loss += batch_loss;
            ++batches;
        }
        if (curve && batches > 0) {
            curve->push_back({epoch, 1, epoch_loss / static_cast<double>(batches)});
        }
    }
    return enc;
}

std::vector<std::vector<double>> embed_all(const DatasetSplit& data, const EncoderParams& params,
                                           Modality which) {
    std::vector<std::vector<double>> out;
    out.reserve(data.pairs.size());
    for (const auto& pair : data.pairs) {
        const auto& src = which == Modality::Text ? pair.text : pair.audio;
        const Tensor raw = Tensor::from({static_cast<int64_t>(src.size())}, src);
        const Tensor emb = encode(raw, params);
        out.emplace_back(emb.data().begin(), emb.data().end());
    }
    return out;
}

DenoiserPair train_phase2(const DatasetSplit& data, const EncoderPair& encoders,
                          const TrainConfig& cfg, std::vector<LossRecord>* curve) {
    cfg.validate();
    if (static_cast<int64_t>(data.pairs.size()) < cfg.batch_size) {
        throw ContractError("phase 2 needs at least batch_size pairs");
    }
    const uint64_t frozen_sum = encoder_checksum(encoders);

    // Encoders are frozen: embed every pair once, outside any tape.
    const auto text_emb = embed_all(data, encoders.text, Modality::Text);
    const auto audio_emb = embed_all(data, encoders.audio, Modality::Audio);

    const DiffusionSchedule schedule = make_schedule(cfg.steps, cfg.beta_start, cfg.beta_end);
    const int64_t hidden = cfg.denoiser_hidden > 0 ? cfg.denoiser_hidden : cfg.dim;
    DenoiserPair den{
        init_denoiser(cfg.dim, Direction::TextToAudio, Rng::derive(cfg.seed, 4), hidden,
                      cfg.scaled_attention),
        init_denoiser(cfg.dim, Direction::AudioToText, Rng::derive(cfg.seed, 5), hidden,
                      cfg.scaled_attention),
    };
    auto params = den.t2a.parameters();
    {
        const auto a2t = den.a2t.parameters();
        params.insert(params.end(), a2t.begin(), a2t.end());
    }
    Adam opt(params, {cfg.lr_phase2, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
    Rng shuffle_rng(Rng::derive(cfg.seed, 6));
    Rng noise_rng(Rng::derive(cfg.seed, 7));

    std::vector<size_t> order(data.pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    const auto bsz = static_cast<size_t>(cfg.batch_size);
    const auto b = static_cast<int64_t>(bsz);

    for (int64_t epoch = 1; epoch <= cfg.epochs_phase2; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int64_t batches = 0;
        for (size_t begin = 0; begin + bsz <= order.size(); begin += bsz) {
            std::vector<double> text_buf, audio_buf;
            text_buf.reserve(bsz * static_cast<size_t>(cfg.dim));
            audio_buf.reserve(bsz * static_cast<size_t>(cfg.dim));
            for (size_t i = 0; i < bsz; ++i) {
                const auto& te = text_emb[order[begin + i]];
                const auto& ae = audio_emb[order[begin + i]];
                text_buf.insert(text_buf.end(), te.begin(), te.end());
                audio_buf.insert(audio_buf.end(), ae.begin(), ae.end());
            }
            const Tensor text_mat = Tensor::from({b, cfg.dim}, text_buf);
            const Tensor audio_mat = Tensor::from({b, cfg.dim}, audio_buf);

            double batch_loss;
            try {
                GradTape tape;
                Tensor total = Tensor::scalar(0.0);
                for (int64_t i = 0; i < b; ++i) {
                    const DistributionState truth{
                        [&] {
                            std::vector<double> v(bsz, 0.0);
                            v[static_cast<size_t>(i)] = 1.0;
                            return v;
                        }(),
                        0};
                    const Tensor target = Tensor::one_hot(b, i);
                    for (const auto* dir : {&den.t2a, &den.a2t}) {
                        const bool is_t2a = dir->direction == Direction::TextToAudio;
                        const auto& query_src = is_t2a ? text_emb[order[begin + i]]
                                                       : audio_emb[order[begin + i]];
                        const Tensor query =
                            Tensor::from({cfg.dim}, query_src);
                        const Tensor& cands = is_t2a ? audio_mat : text_mat;
                        const auto k = noise_rng.uniform_int(1, schedule.steps);
                        const auto noise = noise_rng.normal_vec(bsz);
                        const DistributionState noisy = q_sample(truth, k, noise, schedule);
                        const Tensor x_k = Tensor::from({b}, noisy.values);
                        const Tensor pred = denoise_forward(query, cands, x_k, k, *dir);
                        total = add(total, kl_loss(pred, target, cfg.label_smoothing));
                    }
                }
                const Tensor loss = scale(total, 0.5 / static_cast<double>(b));
                batch_loss = loss.item();
                tape.backward(loss);
            } catch (const NumericError& e) {
                throw NumericError("phase 2 diverged at epoch " + std::to_string(epoch) + ": " +
                                   e.what());
            }
            opt.step();
            epoch_loss += batch_loss;
            ++batches;
        }
        if (curve && batches > 0) {
            curve->push_back({epoch, 2, epoch_loss / static_cast<double>(batches)});
        }
    }

    if (encoder_checksum(encoders) != frozen_sum) {
        throw ContractError("phase 2 mutated the frozen encoder parameters");
    }
    return den;
}

void append_loss_csv(const std::string& path, const std::vector<LossRecord>& records) {
    const bool fresh = !std::ifstream(path).good();
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot open loss csv for writing: " + path);
    if (fresh) out << "epoch,phase,loss\n";
    char line[96];
    for (const auto& r : records) {
        std::snprintf(line, sizeof(line), "%lld,%d,%.17g\n", static_cast<long long>(r.epoch),
                      r.phase, r.loss);
        out << line;
    }
    if (!out) throw IoError("failed writing loss csv: " + path);
}

}  // namespace diffret
