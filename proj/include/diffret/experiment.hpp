#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffret/checkpoint.hpp"
#include "diffret/datagen.hpp"
#include "diffret/retrieval.hpp"
#include "diffret/trainer.hpp"

namespace diffret {

enum class Strategy { Gen, Dis, GenDis };

Strategy parse_strategy(const std::string& name);
const char* strategy_name(Strategy s);

// Flat, JSON-serializable experiment description. Unknown keys in a config
// file are rejected by name; flags override file values.
struct ExperimentConfig {
    TrainConfig train;
    SyntheticSpec data;
    std::string dataset_kind = "synthetic";  // "synthetic" | "embeddings"
    std::string embedding_path;
    std::string strategy = "gen+dis";
    std::vector<uint64_t> eval_seeds = {1, 2, 3};
    double fusion_weight = 1.0;
    std::string mode = "fused";
    int64_t stride = 1;
    std::string out_dir = "out";
    std::vector<int64_t> k_grid = {10, 50, 100, 200};
    std::vector<int64_t> batch_grid = {16, 24, 32};
    std::vector<std::string> strategy_grid = {"gen", "dis", "gen+dis"};

    void validate() const;
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);

// Dataset resolution: synthetic specs are regenerated deterministically,
// embedding files are loaded and checked against the configured width.
SyntheticDataset resolve_dataset(const ExperimentConfig& cfg);

struct TrainOutcome {
    Checkpoint checkpoint;
    std::vector<LossRecord> curve;
};

// Phase 1 and/or phase 2 depending on strategy; pre-encoded datasets skip
// phase 1 and use identity encoders.
TrainOutcome run_training(const ExperimentConfig& cfg, Strategy strategy);

// R@1/5/10 for both directions under one scoring mode, repeated over seeds.
std::vector<EvalReport> run_eval(const Checkpoint& ckpt, const DatasetSplit& eval_split,
                                 ScoreMode mode, const std::vector<uint64_t>& seeds,
                                 double fusion_weight, int64_t stride);

struct AblationRow {
    std::string grid_kind;   // "strategy" | "steps" | "batch_size"
    std::string grid_value;
    Direction direction = Direction::TextToAudio;
    ScoreMode mode = ScoreMode::Fused;
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
};

// One full train+eval per (grid point, seed); strategy rows are scored with
// their matching mode (gen, dis, fused), step/batch rows with the fused mode.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const std::string& grid_kind,
                                      bool out_of_domain = false);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace diffret
