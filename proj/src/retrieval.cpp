#include "diffret/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "diffret/errors.hpp"
#include "diffret/rng.hpp"

namespace diffret {

ScoreMode parse_score_mode(const std::string& name) {
    if (name == "dis") return ScoreMode::Dis;
    if (name == "gen") return ScoreMode::Gen;
    if (name == "fused") return ScoreMode::Fused;
    throw ConfigError("unknown score mode '" + name + "' (expected dis|gen|fused)");
}

const char* score_mode_name(ScoreMode mode) {
    switch (mode) {
        case ScoreMode::Dis: return "dis";
        case ScoreMode::Gen: return "gen";
        default: return "fused";
    }
}

RetrievalResult score(int64_t query_id, std::span<const double> query_emb,
                      const std::vector<Candidate>& candidates, ScoreMode mode,
                      const Checkpoint& ckpt, Direction direction, double fusion_weight,
                      uint64_t seed, int64_t stride) {
    if (candidates.empty()) throw ContractError("score: empty candidate set");
    if (!(fusion_weight >= 0.0)) throw ContractError("score: fusion weight must be >= 0");
    const auto n = static_cast<int64_t>(candidates.size());
    const auto dim = static_cast<int64_t>(query_emb.size());
    if (dim != ckpt.config.dim) {
        throw ConfigError("score: query width " + std::to_string(dim) +
                          " does not match checkpoint dim " + std::to_string(ckpt.config.dim));
    }

    // Discriminative column: softmax over cosine / tau.
    std::vector<double> cos_logits(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const auto& emb = candidates[static_cast<size_t>(i)].embedding;
        if (static_cast<int64_t>(emb.size()) != dim) {
            throw ConfigError("score: candidate width mismatch");
        }
        cos_logits[static_cast<size_t>(i)] =
            cosine_similarity(query_emb, emb) / ckpt.config.tau;
    }
    const Tensor dis_t = softmax(Tensor::from({n}, cos_logits));
    std::vector<double> dis(dis_t.data().begin(), dis_t.data().end());

    // Generative column: full reverse chain; the initial noise is keyed by
    // (seed, query, candidate id) so candidate order cannot change the result.
    std::vector<double> gen(static_cast<size_t>(n), 0.0);
    if (mode != ScoreMode::Dis) {
        if (!ckpt.denoisers) {
            throw ConfigError("score: checkpoint has no denoiser; gen/fused modes unavailable");
        }
        std::vector<double> flat;
        flat.reserve(static_cast<size_t>(n * dim));
        std::vector<double> init_noise(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            const auto& cand = candidates[static_cast<size_t>(i)];
            flat.insert(flat.end(), cand.embedding.begin(), cand.embedding.end());
            Rng cand_rng(Rng::derive(Rng::derive(seed, static_cast<uint64_t>(query_id)),
                                     static_cast<uint64_t>(cand.id)));
            init_noise[static_cast<size_t>(i)] = cand_rng.normal();
        }
        const Tensor cand_mat = Tensor::from({n, dim}, std::move(flat));
        const Tensor query = Tensor::from({dim}, {query_emb.begin(), query_emb.end()});
        const DenoiserParams& den =
            direction == Direction::TextToAudio ? ckpt.denoisers->t2a : ckpt.denoisers->a2t;
        const DistributionState out =
            generate(query, cand_mat, den, ckpt.schedule, seed, stride, nullptr, init_noise);
        gen = out.values;
    }

    RetrievalResult result;
    result.query_id = query_id;
    result.mode = mode;
    result.ranked.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        auto& cs = result.ranked[static_cast<size_t>(i)];
        cs.candidate_id = candidates[static_cast<size_t>(i)].id;
        cs.dis = dis[static_cast<size_t>(i)];
        cs.gen = gen[static_cast<size_t>(i)];
        cs.fused = cs.dis + fusion_weight * cs.gen;
    }
    auto key = [mode](const CandidateScore& c) {
        switch (mode) {
            case ScoreMode::Dis: return c.dis;
            case ScoreMode::Gen: return c.gen;
            default: return c.fused;
        }
    };
    std::sort(result.ranked.begin(), result.ranked.end(),
              [&key](const CandidateScore& a, const CandidateScore& b) {
                  if (key(a) != key(b)) return key(a) > key(b);
                  return a.candidate_id < b.candidate_id;
              });
    return result;
}

double recall_at_k(const std::vector<RetrievalResult>& results, const TruthMap& truths, int64_t k) {
    if (k < 1) throw ContractError("recall_at_k: k must be >= 1");
    if (results.empty()) throw ContractError("recall_at_k: no results");
    int64_t hits = 0;
    for (const auto& res : results) {
        if (k > static_cast<int64_t>(res.ranked.size())) {
            throw ContractError("recall_at_k: k exceeds candidate count");
        }
        const auto it = truths.find(res.query_id);
        if (it == truths.end() || it->second.empty()) {
            throw ContractError("recall_at_k: query " + std::to_string(res.query_id) +
                                " has no relevant targets");
        }
        for (int64_t i = 0; i < k; ++i) {
            if (it->second.count(res.ranked[static_cast<size_t>(i)].candidate_id) > 0) {
                ++hits;
                break;
            }
        }
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

void EvalReport::finalize() {
    for (int m = 0; m < 3; ++m) {
        double acc = 0.0;
        for (const auto& row : per_seed) acc += row[static_cast<size_t>(m)];
        const double mu = per_seed.empty() ? 0.0 : acc / static_cast<double>(per_seed.size());
        double var = 0.0;
        for (const auto& row : per_seed) {
            const double d = row[static_cast<size_t>(m)] - mu;
            var += d * d;
        }
        mean[static_cast<size_t>(m)] = mu;
        stddev[static_cast<size_t>(m)] =
            per_seed.empty() ? 0.0 : std::sqrt(var / static_cast<double>(per_seed.size()));
    }
}

std::string report_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << "direction,mode,seed,r1,r5,r10\n";
    char line[160];
    for (const auto& rep : reports) {
        for (size_t s = 0; s < rep.per_seed.size(); ++s) {
            std::snprintf(line, sizeof(line), "%s,%s,%llu,%.4f,%.4f,%.4f\n",
                          direction_name(rep.direction), score_mode_name(rep.mode),
                          static_cast<unsigned long long>(rep.seeds[s]), rep.per_seed[s][0],
                          rep.per_seed[s][1], rep.per_seed[s][2]);
            out << line;
        }
        std::snprintf(line, sizeof(line), "%s,%s,mean,%.4f,%.4f,%.4f\n",
                      direction_name(rep.direction), score_mode_name(rep.mode), rep.mean[0],
                      rep.mean[1], rep.mean[2]);
        out << line;
        std::snprintf(line, sizeof(line), "%s,%s,std,%.4f,%.4f,%.4f\n",
                      direction_name(rep.direction), score_mode_name(rep.mode), rep.stddev[0],
                      rep.stddev[1], rep.stddev[2]);
        out << line;
    }
    return out.str();
}

std::string report_table(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << "direction  mode    R@1            R@5            R@10\n";
    char line[160];
    for (const auto& rep : reports) {
        std::snprintf(line, sizeof(line), "%-9s  %-6s  %5.1f +- %4.1f  %5.1f +- %4.1f  %5.1f +- %4.1f\n",
                      direction_name(rep.direction), score_mode_name(rep.mode), rep.mean[0],
                      rep.stddev[0], rep.mean[1], rep.stddev[1], rep.mean[2], rep.stddev[2]);
        out << line;
    }
    return out.str();
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

void export_trajectory(const std::vector<TrajectoryPoint>& trace,
                       const std::vector<int64_t>& candidate_ids, const std::string& path) {
    if (trace.empty()) throw ContractError("export_trajectory: empty trace");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open trajectory csv for writing: " + path);
    out << "k";
    for (auto id : candidate_ids) out << ",xk_" << id;
    for (auto id : candidate_ids) out << ",x0hat_" << id;
    out << ",entropy_x0hat\n";
    char buf[32];
    for (const auto& point : trace) {
        out << point.k;
        for (double v : point.state) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        for (double v : point.x0_hat) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.17g\n", entropy(point.x0_hat));
        out << buf;
    }
    if (!out) throw IoError("failed writing trajectory csv: " + path);
}

void export_trajectory_svg(const std::vector<TrajectoryPoint>& trace,
                           const std::vector<int64_t>& candidate_ids, int64_t truth_id,
                           const std::string& path) {
    if (trace.empty()) throw ContractError("export_trajectory_svg: empty trace");
    const double width = 720.0, height = 420.0, ml = 50.0, mr = 16.0, mt = 24.0, mb = 40.0;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;
    const auto k_max = static_cast<double>(trace.front().k);

    auto x_of = [&](double k) { return ml + (k_max - k) / std::max(1.0, k_max) * plot_w; };
    auto y_of = [&](double p) { return mt + (1.0 - p) * plot_h; };

    std::ofstream out(path);
    if (!out) throw IoError("cannot open trajectory svg for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w
        << "\" y2=\"" << mt + plot_h << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + plot_h << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << height - 8
        << "\" font-size=\"12\" text-anchor=\"middle\">noise level k (reverse process ->)</text>\n";
    out << "<text x=\"14\" y=\"" << mt + plot_h / 2
        << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << mt + plot_h / 2 << ")\">candidate probability</text>\n";

    char buf[64];
    for (size_t c = 0; c < candidate_ids.size(); ++c) {
        const bool is_truth = candidate_ids[c] == truth_id;
        out << "<polyline fill=\"none\" stroke=\"" << (is_truth ? "#d62728" : "#9aa0a6")
            << "\" stroke-width=\"" << (is_truth ? 2.0 : 1.0) << "\" points=\"";
        for (const auto& point : trace) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x_of(static_cast<double>(point.k)),
                          y_of(point.x0_hat[c]));
            out << buf;
        }
        out << "\"/>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("failed writing trajectory svg: " + path);
}

}  // namespace diffret
