#include "diffret/datagen.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "diffret/errors.hpp"
#include "diffret/rng.hpp"

namespace diffret {

void SyntheticSpec::validate() const {
    if (n_train < 4 || n_test < 4) throw ConfigError("synthetic: need at least 4 items per split");
    if (latent_dim < 1) throw ConfigError("synthetic: latent_dim must be >= 1 (rank-0 mixing)");
    if (text_dim < 1 || audio_dim < 1) throw ConfigError("synthetic: feature dims must be >= 1");
    if (!(noise_std >= 0.0)) throw ConfigError("synthetic: noise_std must be >= 0");
    if (captions_per_item < 1) throw ConfigError("synthetic: captions_per_item must be >= 1");
}

namespace {

using Matrix = std::vector<double>;  // row-major rows x cols

Matrix gaussian_matrix(int64_t rows, int64_t cols, uint64_t seed, double scale) {
    Rng rng(seed);
    Matrix m(static_cast<size_t>(rows * cols));
    for (auto& v : m) v = rng.normal() * scale;
    return m;
}

std::vector<double> matvec(const Matrix& m, int64_t rows, int64_t cols,
                           std::span<const double> x) {
    std::vector<double> out(static_cast<size_t>(rows), 0.0);
    for (int64_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            acc += m[static_cast<size_t>(i * cols + j)] * x[static_cast<size_t>(j)];
        }
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

// Rotation by theta in every 2-plane of a seeded random orthonormal basis.
// Returned matrix is dim x dim; callers skip it entirely for theta == 0 so a
// zero shift reproduces the source matrices bit-for-bit.
Matrix rotation_matrix(int64_t dim, double theta_rad, uint64_t seed) {
    // Random orthonormal basis via Gram-Schmidt on a Gaussian matrix.
    Matrix basis = gaussian_matrix(dim, dim, seed, 1.0);
    for (int64_t r = 0; r < dim; ++r) {
        double* row = basis.data() + r * dim;
        for (int64_t p = 0; p < r; ++p) {
            const double* prev = basis.data() + p * dim;
            double dot = 0.0;
            for (int64_t j = 0; j < dim; ++j) dot += row[j] * prev[j];
            for (int64_t j = 0; j < dim; ++j) row[j] -= dot * prev[j];
        }
        double norm = 0.0;
        for (int64_t j = 0; j < dim; ++j) norm += row[j] * row[j];
        norm = std::sqrt(norm);
        if (!(norm > 1e-9)) throw NumericError("rotation: degenerate basis draw");
        for (int64_t j = 0; j < dim; ++j) row[j] /= norm;
    }

    const double c = std::cos(theta_rad), s = std::sin(theta_rad);
    Matrix rot(static_cast<size_t>(dim * dim), 0.0);
    for (int64_t i = 0; i < dim; ++i) rot[static_cast<size_t>(i * dim + i)] = 1.0;
    for (int64_t p = 0; p + 1 < dim; p += 2) {
        const double* u = basis.data() + p * dim;
        const double* v = basis.data() + (p + 1) * dim;
        for (int64_t i = 0; i < dim; ++i) {
            for (int64_t j = 0; j < dim; ++j) {
                rot[static_cast<size_t>(i * dim + j)] +=
                    (c - 1.0) * (u[i] * u[j] + v[i] * v[j]) + s * (v[i] * u[j] - u[i] * v[j]);
            }
        }
    }
    return rot;
}

Matrix matmul_sq(const Matrix& a, int64_t dim, const Matrix& b, int64_t cols) {
    Matrix out(static_cast<size_t>(dim * cols), 0.0);
    for (int64_t i = 0; i < dim; ++i) {
        for (int64_t p = 0; p < dim; ++p) {
            const double av = a[static_cast<size_t>(i * dim + p)];
            for (int64_t j = 0; j < cols; ++j) {
                out[static_cast<size_t>(i * cols + j)] += av * b[static_cast<size_t>(p * cols + j)];
            }
        }
    }
    return out;
}

struct Mixing {
    Matrix text, audio;  // text_dim x latent, audio_dim x latent
};

Mixing source_mixing(const SyntheticSpec& spec) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    return {gaussian_matrix(spec.text_dim, spec.latent_dim, Rng::derive(spec.mix_seed, 0), scale),
            gaussian_matrix(spec.audio_dim, spec.latent_dim, Rng::derive(spec.mix_seed, 1), scale)};
}

Mixing target_mixing(const SyntheticSpec& spec, const Mixing& source) {
    if (spec.shift_degrees == 0.0) return source;
    const double theta = spec.shift_degrees * std::numbers::pi / 180.0;
    const Matrix rt = rotation_matrix(spec.text_dim, theta, Rng::derive(spec.mix_seed, 2));
    const Matrix ra = rotation_matrix(spec.audio_dim, theta, Rng::derive(spec.mix_seed, 3));
    return {matmul_sq(rt, spec.text_dim, source.text, spec.latent_dim),
            matmul_sq(ra, spec.audio_dim, source.audio, spec.latent_dim)};
}

DatasetSplit make_split(const SyntheticSpec& spec, const Mixing& mix, int64_t items, Split split,
                        Domain domain, uint64_t seed, int64_t* next_id) {
    DatasetSplit out;
    out.split = split;
    out.domain = domain;
    out.text_dim = spec.text_dim;
    out.audio_dim = spec.audio_dim;
    Rng rng(seed);
    for (int64_t item = 0; item < items; ++item) {
        std::vector<double> z(static_cast<size_t>(spec.latent_dim));
        for (auto& v : z) v = rng.normal();
        auto audio = matvec(mix.audio, spec.audio_dim, spec.latent_dim, z);
        for (auto& v : audio) v += spec.noise_std * rng.normal();
        const int64_t group = *next_id;
        for (int64_t cap = 0; cap < spec.captions_per_item; ++cap) {
            auto text = matvec(mix.text, spec.text_dim, spec.latent_dim, z);
            for (auto& v : text) v += spec.noise_std * rng.normal();
            PairItem pair;
            pair.pair_id = (*next_id)++;
            pair.group = group;
            pair.text = std::move(text);
            pair.audio = audio;
            out.pairs.push_back(std::move(pair));
        }
    }
    return out;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
    spec.validate();
    const Mixing source = source_mixing(spec);
    const Mixing target = target_mixing(spec, source);

    SyntheticDataset out;
    int64_t next_id = 0;
    out.train = make_split(spec, source, spec.n_train, Split::Train, Domain::Source,
                           Rng::derive(seed, 10), &next_id);
    out.test_source = make_split(spec, source, spec.n_test, Split::Test, Domain::Source,
                                 Rng::derive(seed, 11), &next_id);
    // The target stream does not depend on the shift angle, so sweeps over the
    // angle compare the same underlying items.
    out.test_target = make_split(spec, target, spec.n_test, Split::Test, Domain::Target,
                                 Rng::derive(seed, 12), &next_id);
    return out;
}

// --- embedding files ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'F', 'E', 'M'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError(FormatError::Kind::Truncated, "embedding file truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_block(std::ostream& out, std::span<const double> values) {
    for (double v : values) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

void read_f64_block(std::istream& in, std::span<double> values, const char* what) {
    for (auto& v : values) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (in.gcount() != 8) {
            throw FormatError(FormatError::Kind::Truncated,
                              std::string("embedding file truncated in ") + what);
        }
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
        std::memcpy(&v, &bits, sizeof(v));
        if (!std::isfinite(v)) {
            throw FormatError(FormatError::Kind::BadValue,
                              std::string("non-finite value in embedding ") + what);
        }
    }
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

DatasetSplit load_embeddings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embedding file: " + path);
    std::string header;
    if (!std::getline(in, header) || header.empty()) {
        throw FormatError(FormatError::Kind::Truncated, "embedding csv has no header: " + path);
    }
    int64_t text_cols = 0, audio_cols = 0;
    {
        std::stringstream ss(header);
        std::string col;
        if (!std::getline(ss, col, ',') || col != "pair_id") {
            throw FormatError(FormatError::Kind::BadMagic,
                              "embedding csv header must start with pair_id: " + path);
        }
        while (std::getline(ss, col, ',')) {
            if (col.rfind("t_", 0) == 0) ++text_cols;
            else if (col.rfind("a_", 0) == 0) ++audio_cols;
            else throw FormatError(FormatError::Kind::BadValue, "unknown csv column: " + col);
        }
    }
    if (text_cols == 0 || audio_cols == 0 || text_cols != audio_cols) {
        throw FormatError(FormatError::Kind::BadShape,
                          "embedding csv needs equal nonzero t_*/a_* column counts");
    }
    DatasetSplit out;
    out.text_dim = text_cols;
    out.audio_dim = audio_cols;
    out.pre_encoded = true;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        PairItem pair;
        if (!std::getline(ss, field, ',')) {
            throw FormatError(FormatError::Kind::Truncated, "short csv row");
        }
        pair.pair_id = std::stoll(field);
        pair.group = pair.pair_id;
        auto read_vec = [&](int64_t n, std::vector<double>& dst) {
            dst.reserve(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) {
                if (!std::getline(ss, field, ',')) {
                    throw FormatError(FormatError::Kind::Truncated, "short csv row");
                }
                const double v = std::stod(field);
                if (!std::isfinite(v)) {
                    throw FormatError(FormatError::Kind::BadValue, "non-finite value in csv");
                }
                dst.push_back(v);
            }
        };
        read_vec(text_cols, pair.text);
        read_vec(audio_cols, pair.audio);
        out.pairs.push_back(std::move(pair));
    }
    return out;
}

}  // namespace

void save_embeddings(const std::string& path, const DatasetSplit& split) {
    if (split.text_dim != split.audio_dim) {
        throw ConfigError("embedding files hold one shared width; got text dim " +
                          std::to_string(split.text_dim) + " vs audio dim " +
                          std::to_string(split.audio_dim));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open embedding file for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(split.pairs.size()));
    write_u32(out, static_cast<uint32_t>(split.text_dim));
    for (const auto& pair : split.pairs) write_f64_block(out, pair.text);
    for (const auto& pair : split.pairs) write_f64_block(out, pair.audio);
    if (!out) throw IoError("failed writing embedding file: " + path);
}

DatasetSplit load_embeddings(const std::string& path) {
    if (has_suffix(path, ".csv")) return load_embeddings_csv(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4) {
        throw FormatError(FormatError::Kind::Truncated, "embedding file shorter than header");
    }
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(FormatError::Kind::BadMagic, "not an embedding file (bad magic)");
    }
    const uint32_t version = read_u32(in);
    if (version != kVersion) {
        throw FormatError(FormatError::Kind::BadVersion,
                          "unsupported embedding file version " + std::to_string(version));
    }
    const uint32_t n = read_u32(in);
    const uint32_t dim = read_u32(in);
    if (n == 0 || dim == 0) {
        throw FormatError(FormatError::Kind::BadShape, "embedding file with zero counts");
    }
    DatasetSplit out;
    out.text_dim = dim;
    out.audio_dim = dim;
    out.pre_encoded = true;
    out.pairs.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        out.pairs[i].pair_id = static_cast<int64_t>(i);
        out.pairs[i].group = static_cast<int64_t>(i);
        out.pairs[i].text.resize(dim);
        read_f64_block(in, out.pairs[i].text, "text block");
    }
    for (uint32_t i = 0; i < n; ++i) {
        out.pairs[i].audio.resize(dim);
        read_f64_block(in, out.pairs[i].audio, "audio block");
    }
    return out;
}

void save_dataset_csv(const std::string& path, const DatasetSplit& split) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open dataset csv for writing: " + path);
    out << "pair_id,group,split,domain";
    for (int64_t j = 0; j < split.text_dim; ++j) out << ",t_" << j;
    for (int64_t j = 0; j < split.audio_dim; ++j) out << ",a_" << j;
    out << "\n";
    const char* split_name = split.split == Split::Train ? "train"
                             : split.split == Split::Val ? "val"
                                                         : "test";
    const char* domain_name = split.domain == Domain::Source ? "source" : "target";
    char buf[32];
    for (const auto& pair : split.pairs) {
        out << pair.pair_id << ',' << pair.group << ',' << split_name << ',' << domain_name;
        for (double v : pair.text) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        for (double v : pair.audio) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        out << "\n";
    }
    if (!out) throw IoError("failed writing dataset csv: " + path);
}

}  // namespace diffret
