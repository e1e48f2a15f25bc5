#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace diffret {

enum class Split { Train, Val, Test };
enum class Domain { Source, Target };

struct PairItem {
    int64_t pair_id = 0;
    int64_t group = 0;  // items sharing an audio clip share a group
    std::vector<double> text;
    std::vector<double> audio;
};

struct DatasetSplit {
    std::vector<PairItem> pairs;
    Split split = Split::Train;
    Domain domain = Domain::Source;
    int64_t text_dim = 0;
    int64_t audio_dim = 0;
    bool pre_encoded = false;  // vectors are already D-dim embeddings
};

// Paired-modality generator: both raw vectors are noisy linear images of a
// shared latent, and the target domain rotates the mixing matrices by a
// configurable angle to emulate a train/eval domain gap.
struct SyntheticSpec {
    int64_t n_train = 512;  // items in the train split
    int64_t n_test = 128;   // items in each test split
    int64_t latent_dim = 16;
    int64_t text_dim = 48;
    int64_t audio_dim = 64;
    double noise_std = 0.25;
    double shift_degrees = 30.0;    // target-domain mixing rotation
    int64_t captions_per_item = 1;  // >1 emits several text variants per audio
    uint64_t mix_seed = 7;

    void validate() const;
};

struct SyntheticDataset {
    DatasetSplit train;        // source domain
    DatasetSplit test_source;  // in-domain evaluation split
    DatasetSplit test_target;  // shifted-domain evaluation split
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

// Pre-encoded embedding files: binary "DFEM" (version, counts, little-endian
// f64 text block then audio block) or a CSV with a pair_id,t_*,a_* header.
DatasetSplit load_embeddings(const std::string& path);
void save_embeddings(const std::string& path, const DatasetSplit& split);

// Raw feature CSV used by the gen-data subcommand (pair_id, group, split,
// domain, then text and audio feature columns).
void save_dataset_csv(const std::string& path, const DatasetSplit& split);

}  // namespace diffret
