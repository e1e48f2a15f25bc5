#include "diffret/diffusion.hpp"

#include <cmath>

#include "diffret/errors.hpp"
#include "diffret/rng.hpp"

namespace diffret {

double DiffusionSchedule::beta_at(int64_t k) const {
    if (k < 1 || k > steps) throw ContractError("schedule: noise level out of range");
    return beta[static_cast<size_t>(k - 1)];
}

double DiffusionSchedule::alpha_bar_at(int64_t k) const {
    if (k == 0) return 1.0;
    if (k < 0 || k > steps) throw ContractError("schedule: noise level out of range");
    return alpha_bar[static_cast<size_t>(k - 1)];
}

DiffusionSchedule make_schedule(int64_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ConfigError("schedule: requires 0 < beta_start <= beta_end < 1");
    }
    DiffusionSchedule s;
    s.steps = steps;
    s.beta.resize(static_cast<size_t>(steps));
    s.alpha.resize(static_cast<size_t>(steps));
    s.alpha_bar.resize(static_cast<size_t>(steps));
    double running = 1.0;
    for (int64_t i = 0; i < steps; ++i) {
        const double t = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        const double b = beta_start + (beta_end - beta_start) * t;
        s.beta[static_cast<size_t>(i)] = b;
        s.alpha[static_cast<size_t>(i)] = 1.0 - b;
        running *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(i)] = running;
        if (!(running > 0.0)) throw NumericError("schedule: alpha_bar underflowed to zero");
        if (i > 0 && !(running < s.alpha_bar[static_cast<size_t>(i - 1)])) {
            throw NumericError("schedule: alpha_bar is not strictly decreasing");
        }
    }
    return s;
}

DistributionState q_sample(const DistributionState& x0, int64_t k, std::span<const double> noise,
                           const DiffusionSchedule& schedule) {
    if (k < 1 || k > schedule.steps) throw ContractError("q_sample: noise level out of range");
    if (noise.size() != x0.values.size()) throw ContractError("q_sample: noise length mismatch");
    const double ab = schedule.alpha_bar_at(k);
    const double signal = std::sqrt(ab);
    const double spread = std::sqrt(1.0 - ab);
    DistributionState out;
    out.noise_level = k;
    out.values.resize(x0.values.size());
    for (size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = signal * x0.values[i] + spread * noise[i];
    }
    return out;
}

DistributionState ddim_step_to(const DistributionState& x_k, std::span<const double> x0_hat,
                               int64_t k_from, int64_t k_to, const DiffusionSchedule& schedule) {
    if (k_from < 1 || k_from > schedule.steps) throw ContractError("ddim_step: k out of range");
    if (k_to < 0 || k_to >= k_from) throw ContractError("ddim_step: target level must be below k");
    if (x0_hat.size() != x_k.values.size()) throw ContractError("ddim_step: x0_hat length mismatch");
    if (x_k.noise_level != k_from) throw ContractError("ddim_step: state is not at level k");

    const double ab_from = schedule.alpha_bar_at(k_from);
    const double ab_to = schedule.alpha_bar_at(k_to);
    const double signal_from = std::sqrt(ab_from);
    const double spread_from = std::sqrt(1.0 - ab_from);
    const double signal_to = std::sqrt(ab_to);
    const double spread_to = std::sqrt(1.0 - ab_to);

    DistributionState out;
    out.noise_level = k_to;
    out.values.resize(x_k.values.size());
    for (size_t i = 0; i < out.values.size(); ++i) {
        const double residual = x_k.values[i] - signal_from * x0_hat[i];
        double eps_hat = 0.0;
        if (spread_from == 0.0) {
            if (residual != 0.0) {
                throw NumericError("ddim_step: nonzero residual at a noise-free level");
            }
        } else {
            eps_hat = residual / spread_from;
        }
        out.values[i] = signal_to * x0_hat[i] + spread_to * eps_hat;
    }
    return out;
}

DistributionState ddim_step(const DistributionState& x_k, std::span<const double> x0_hat,
                            int64_t k, const DiffusionSchedule& schedule) {
    return ddim_step_to(x_k, x0_hat, k, k - 1, schedule);
}

DistributionState generate(const Tensor& query_rep, const Tensor& cand_reps,
                           const DenoiserParams& denoiser, const DiffusionSchedule& schedule,
                           uint64_t seed, int64_t stride, std::vector<TrajectoryPoint>* trace,
                           std::span<const double> init_noise) {
    if (cand_reps.rank() != 2 || cand_reps.dim(0) < 1) {
        throw ContractError("generate: candidate set must be non-empty");
    }
    if (stride < 1) throw ContractError("generate: stride must be >= 1");
    const int64_t n = cand_reps.dim(0);

    DistributionState state;
    state.noise_level = schedule.steps;
    if (!init_noise.empty()) {
        if (static_cast<int64_t>(init_noise.size()) != n) {
            throw ContractError("generate: init_noise length mismatch");
        }
        state.values.assign(init_noise.begin(), init_noise.end());
    } else {
        Rng rng(seed);
        state.values = rng.normal_vec(static_cast<size_t>(n));
    }

    if (trace) trace->clear();
    std::vector<double> x0_hat;
    int64_t k = schedule.steps;
    while (k > 0) {
        const Tensor xk_t = Tensor::from({n}, state.values);
        const Tensor pred = denoise_forward(query_rep, cand_reps, xk_t, k, denoiser);
        x0_hat.assign(pred.data().begin(), pred.data().end());
        if (trace) trace->push_back({k, state.values, x0_hat});
        const int64_t k_next = std::max<int64_t>(0, k - stride);
        state = ddim_step_to(state, x0_hat, k, k_next, schedule);
        k = k_next;
    }
    if (trace) trace->push_back({0, state.values, x0_hat});

    DistributionState out;
    out.noise_level = 0;
    out.values = std::move(x0_hat);
    return out;
}

}  // namespace diffret
