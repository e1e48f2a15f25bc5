#include "diffret/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "diffret/errors.hpp"

namespace diffret {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'F', 'A', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

    void raw(char* dst, size_t n, const char* what) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n) {
            throw FormatError(FormatError::Kind::Truncated,
                              std::string("checkpoint truncated while reading ") + what);
        }
    }

    uint32_t u32(const char* what) {
        unsigned char b[4];
        raw(reinterpret_cast<char*>(b), 4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
        return v;
    }

    uint64_t u64(const char* what) {
        unsigned char b[8];
        raw(reinterpret_cast<char*>(b), 8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
        return v;
    }

    double f64(const char* what) {
        const uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

private:
    std::istream& in_;
};

void put_tensor(std::string& out, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u64(out, static_cast<uint64_t>(d));
    for (double v : t.data()) put_f64(out, v);
}

Tensor take_tensor(Reader& r, bool as_param, const char* what) {
    const uint32_t rank = r.u32(what);
    if (rank > 2) throw FormatError(FormatError::Kind::BadShape, "checkpoint tensor rank > 2");
    std::vector<int64_t> shape(rank);
    int64_t n = 1;
    for (auto& d : shape) {
        d = static_cast<int64_t>(r.u64(what));
        n *= d;
    }
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = r.f64(what);
    return as_param ? Tensor::param(std::move(shape), std::move(data))
                    : Tensor::from(std::move(shape), std::move(data));
}

void put_section(std::string& out, const std::string& name, const std::string& payload) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u64(out, payload.size());
    out.append(payload);
}

json config_json(const Checkpoint& ckpt) {
    const TrainConfig& c = ckpt.config;
    return json{{"dim", c.dim},
                {"steps", c.steps},
                {"batch_size", c.batch_size},
                {"epochs_phase1", c.epochs_phase1},
                {"epochs_phase2", c.epochs_phase2},
                {"lr_phase1", c.lr_phase1},
                {"lr_phase2", c.lr_phase2},
                {"tau", c.tau},
                {"seed", c.seed},
                {"beta_start", c.beta_start},
                {"beta_end", c.beta_end},
                {"label_smoothing", c.label_smoothing},
                {"denoiser_hidden", c.denoiser_hidden},
                {"scaled_attention", c.scaled_attention},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps},
                {"text_input_dim", ckpt.text_input_dim},
                {"audio_input_dim", ckpt.audio_input_dim},
                {"identity_encoders", ckpt.identity_encoders}};
}

void config_from_json(const json& j, Checkpoint& ckpt) {
    TrainConfig& c = ckpt.config;
    j.at("dim").get_to(c.dim);
    j.at("steps").get_to(c.steps);
    j.at("batch_size").get_to(c.batch_size);
    j.at("epochs_phase1").get_to(c.epochs_phase1);
    j.at("epochs_phase2").get_to(c.epochs_phase2);
    j.at("lr_phase1").get_to(c.lr_phase1);
    j.at("lr_phase2").get_to(c.lr_phase2);
    j.at("tau").get_to(c.tau);
    j.at("seed").get_to(c.seed);
    j.at("beta_start").get_to(c.beta_start);
    j.at("beta_end").get_to(c.beta_end);
    j.at("label_smoothing").get_to(c.label_smoothing);
    j.at("denoiser_hidden").get_to(c.denoiser_hidden);
    j.at("scaled_attention").get_to(c.scaled_attention);
    j.at("adam_beta1").get_to(c.adam_beta1);
    j.at("adam_beta2").get_to(c.adam_beta2);
    j.at("adam_eps").get_to(c.adam_eps);
    j.at("text_input_dim").get_to(ckpt.text_input_dim);
    j.at("audio_input_dim").get_to(ckpt.audio_input_dim);
    j.at("identity_encoders").get_to(ckpt.identity_encoders);
}

std::string encoder_payload(const EncoderParams& p) {
    std::string out;
    put_u32(out, p.identity ? 1u : 0u);
    put_u64(out, static_cast<uint64_t>(p.input_dim));
    put_u64(out, static_cast<uint64_t>(p.dim));
    if (!p.identity) {
        for (const auto& t : {p.w1, p.b1, p.w2, p.b2}) put_tensor(out, t);
    }
    return out;
}

EncoderParams encoder_from_payload(Reader& r, Modality m, const char* what) {
    const bool identity = r.u32(what) != 0;
    const auto input_dim = static_cast<int64_t>(r.u64(what));
    const auto dim = static_cast<int64_t>(r.u64(what));
    if (identity) {
        EncoderParams p = identity_encoder(dim, m);
        p.input_dim = input_dim;
        return p;
    }
    EncoderParams p;
    p.modality = m;
    p.input_dim = input_dim;
    p.dim = dim;
    p.w1 = take_tensor(r, true, what);
    p.b1 = take_tensor(r, true, what);
    p.w2 = take_tensor(r, true, what);
    p.b2 = take_tensor(r, true, what);
    return p;
}

std::string denoiser_payload(const DenoiserParams& p) {
    std::string out;
    put_u64(out, static_cast<uint64_t>(p.dim));
    put_u64(out, static_cast<uint64_t>(p.hidden));
    put_u32(out, p.scaled_attention ? 1u : 0u);
    for (const auto& t : p.parameters()) put_tensor(out, t);
    return out;
}

DenoiserParams denoiser_from_payload(Reader& r, Direction dir, const char* what) {
    DenoiserParams p;
    p.direction = dir;
    p.dim = static_cast<int64_t>(r.u64(what));
    p.hidden = static_cast<int64_t>(r.u64(what));
    p.scaled_attention = r.u32(what) != 0;
    p.w_query = take_tensor(r, true, what);
    p.w_key = take_tensor(r, true, what);
    p.w_value = take_tensor(r, true, what);
    p.dec_w1 = take_tensor(r, true, what);
    p.dec_b1 = take_tensor(r, true, what);
    p.dec_w2 = take_tensor(r, true, what);
    p.dec_b2 = take_tensor(r, true, what);
    return p;
}

std::string schedule_payload(const DiffusionSchedule& s) {
    std::string out;
    put_u64(out, static_cast<uint64_t>(s.steps));
    for (const auto* arr : {&s.beta, &s.alpha, &s.alpha_bar}) {
        for (double v : *arr) put_f64(out, v);
    }
    return out;
}

DiffusionSchedule schedule_from_payload(Reader& r) {
    DiffusionSchedule s;
    s.steps = static_cast<int64_t>(r.u64("schedule"));
    if (s.steps < 1) throw FormatError(FormatError::Kind::BadShape, "checkpoint schedule empty");
    s.beta.resize(static_cast<size_t>(s.steps));
    s.alpha.resize(static_cast<size_t>(s.steps));
    s.alpha_bar.resize(static_cast<size_t>(s.steps));
    for (auto* arr : {&s.beta, &s.alpha, &s.alpha_bar}) {
        for (auto& v : *arr) v = r.f64("schedule");
    }
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string blob;
    blob.append(kMagic, 4);
    put_u32(blob, kVersion);

    put_section(blob, "config", config_json(ckpt).dump());
    put_section(blob, "schedule", schedule_payload(ckpt.schedule));
    if (ckpt.encoders) {
        put_section(blob, "encoder.text", encoder_payload(ckpt.encoders->text));
        put_section(blob, "encoder.audio", encoder_payload(ckpt.encoders->audio));
    }
    if (ckpt.denoisers) {
        put_section(blob, "denoiser.t2a", denoiser_payload(ckpt.denoisers->t2a));
        put_section(blob, "denoiser.a2t", denoiser_payload(ckpt.denoisers->a2t));
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    Reader r(in);

    char magic[4];
    r.raw(magic, 4, "header");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(FormatError::Kind::BadMagic, "not a checkpoint file (bad magic)");
    }
    const uint32_t version = r.u32("header");
    if (version != kVersion) {
        throw FormatError(FormatError::Kind::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
    }

    Checkpoint ckpt;
    std::optional<EncoderParams> enc_text, enc_audio;
    std::optional<DenoiserParams> den_t2a, den_a2t;
    bool saw_config = false, saw_schedule = false;

    while (!r.at_eof()) {
        const uint32_t name_len = r.u32("section name");
        if (name_len > 256) {
            throw FormatError(FormatError::Kind::BadShape, "checkpoint section name too long");
        }
        std::string name(name_len, '\0');
        r.raw(name.data(), name_len, "section name");
        const uint64_t payload_len = r.u64("section length");
        std::string payload(payload_len, '\0');
        r.raw(payload.data(), payload_len, name.c_str());

        std::istringstream ps(payload);
        Reader pr(ps);
        if (name == "config") {
            json j;
            try {
                j = json::parse(payload);
            } catch (const json::exception& e) {
                throw FormatError(FormatError::Kind::BadValue,
                                  std::string("checkpoint config unreadable: ") + e.what());
            }
            try {
                config_from_json(j, ckpt);
            } catch (const json::exception& e) {
                throw FormatError(FormatError::Kind::BadValue,
                                  std::string("checkpoint config incomplete: ") + e.what());
            }
            saw_config = true;
        } else if (name == "schedule") {
            ckpt.schedule = schedule_from_payload(pr);
            saw_schedule = true;
        } else if (name == "encoder.text") {
            enc_text = encoder_from_payload(pr, Modality::Text, "encoder.text");
        } else if (name == "encoder.audio") {
            enc_audio = encoder_from_payload(pr, Modality::Audio, "encoder.audio");
        } else if (name == "denoiser.t2a") {
            den_t2a = denoiser_from_payload(pr, Direction::TextToAudio, "denoiser.t2a");
        } else if (name == "denoiser.a2t") {
            den_a2t = denoiser_from_payload(pr, Direction::AudioToText, "denoiser.a2t");
        } else {
            throw FormatError(FormatError::Kind::BadValue, "unknown checkpoint section: " + name);
        }
    }

    if (!saw_config || !saw_schedule) {
        throw FormatError(FormatError::Kind::Truncated, "checkpoint missing config or schedule");
    }
    if (enc_text.has_value() != enc_audio.has_value()) {
        throw FormatError(FormatError::Kind::Truncated, "checkpoint has only one encoder");
    }
    if (den_t2a.has_value() != den_a2t.has_value()) {
        throw FormatError(FormatError::Kind::Truncated, "checkpoint has only one denoiser");
    }
    if (enc_text) ckpt.encoders = EncoderPair{std::move(*enc_text), std::move(*enc_audio)};
    if (den_t2a) ckpt.denoisers = DenoiserPair{std::move(*den_t2a), std::move(*den_a2t)};
    return ckpt;
}

}  // namespace diffret
