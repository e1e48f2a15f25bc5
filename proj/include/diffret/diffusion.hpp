#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diffret/denoiser.hpp"

namespace diffret {

// Linear beta schedule with the cumulative-product tables used by both the
// closed-form forward corruption and the reverse sampler. Arrays are indexed
// by k-1 (k runs 1..steps); alpha_bar_at(0) is defined as 1.
struct DiffusionSchedule {
    int64_t steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(int64_t k) const;
    double alpha_bar_at(int64_t k) const;
};

DiffusionSchedule make_schedule(int64_t steps, double beta_start = 1e-4, double beta_end = 0.02);

// Relevance distribution over N candidates at a given noise level. Level 0 is
// clean (one-hot ground truth at training time), level = steps is near-pure
// noise.
struct DistributionState {
    std::vector<double> values;
    int64_t noise_level = 0;
};

// Closed-form corruption: x_k = sqrt(alpha_bar_k) x0 + sqrt(1-alpha_bar_k) eps.
// The noise is injected by the caller so sampling stays deterministic.
DistributionState q_sample(const DistributionState& x0, int64_t k, std::span<const double> noise,
                           const DiffusionSchedule& schedule);

// Deterministic (eta = 0) reverse update from level k_from to k_to using the
// denoiser's clean-distribution estimate.
DistributionState ddim_step_to(const DistributionState& x_k, std::span<const double> x0_hat,
                               int64_t k_from, int64_t k_to, const DiffusionSchedule& schedule);

DistributionState ddim_step(const DistributionState& x_k, std::span<const double> x0_hat,
                            int64_t k, const DiffusionSchedule& schedule);

struct TrajectoryPoint {
    int64_t k = 0;
    std::vector<double> state;   // x_k entering this level
    std::vector<double> x0_hat;  // clean estimate predicted at this level
};

// Full reverse chain: starts from Gaussian noise, alternates denoiser
// prediction and DDIM updates down to level 0, and returns the final clean
// estimate (a valid probability vector). Pure function of (inputs, params,
// seed). init_noise, when non-empty, overrides the seeded Gaussian draw.
DistributionState generate(const Tensor& query_rep, const Tensor& cand_reps,
                           const DenoiserParams& denoiser, const DiffusionSchedule& schedule,
                           uint64_t seed, int64_t stride = 1,
                           std::vector<TrajectoryPoint>* trace = nullptr,
                           std::span<const double> init_noise = {});

}  // namespace diffret
