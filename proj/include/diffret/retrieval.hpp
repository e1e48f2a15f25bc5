#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "diffret/checkpoint.hpp"

namespace diffret {

enum class ScoreMode { Dis, Gen, Fused };

ScoreMode parse_score_mode(const std::string& name);
const char* score_mode_name(ScoreMode mode);

struct Candidate {
    int64_t id = 0;
    std::vector<double> embedding;
};

struct CandidateScore {
    int64_t candidate_id = 0;
    double dis = 0.0;    // softmax of cosine / tau over the candidate set
    double gen = 0.0;    // diffusion-generated joint probability
    double fused = 0.0;  // dis + fusion_weight * gen
};

struct RetrievalResult {
    int64_t query_id = 0;
    ScoreMode mode = ScoreMode::Fused;
    std::vector<CandidateScore> ranked;  // descending mode score, ties by ascending id
};

// Scores one query against a candidate set. The per-candidate generator noise
// is derived from (seed, query id, candidate id), so rankings are invariant
// to candidate-set ordering.
RetrievalResult score(int64_t query_id, std::span<const double> query_emb,
                      const std::vector<Candidate>& candidates, ScoreMode mode,
                      const Checkpoint& ckpt, Direction direction, double fusion_weight,
                      uint64_t seed, int64_t stride = 1);

using TruthMap = std::map<int64_t, std::set<int64_t>>;

// Percentage of queries whose any relevant target appears in the top k.
double recall_at_k(const std::vector<RetrievalResult>& results, const TruthMap& truths, int64_t k);

struct EvalReport {
    Direction direction = Direction::TextToAudio;
    ScoreMode mode = ScoreMode::Fused;
    std::vector<uint64_t> seeds;
    std::vector<std::array<double, 3>> per_seed;  // R@1, R@5, R@10
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};

    void finalize();  // fills mean/stddev from per_seed
};

std::string report_csv(const std::vector<EvalReport>& reports);
std::string report_table(const std::vector<EvalReport>& reports);

double entropy(std::span<const double> p);

// CSV of the reverse chain for one query: one row per level k = K..0 with the
// state x_k, the clean estimate at that level, and its entropy.
void export_trajectory(const std::vector<TrajectoryPoint>& trace, const std::vector<int64_t>& candidate_ids,
                       const std::string& path);

// Self-contained SVG of per-candidate probability against noise level.
void export_trajectory_svg(const std::vector<TrajectoryPoint>& trace,
                           const std::vector<int64_t>& candidate_ids, int64_t truth_id,
                           const std::string& path);

}  // namespace diffret
